"""Summarize an episodes.csv: reward moving averages, curriculum, best lengths.

    python3 scripts/analyze_log.py runs/toffoli3/episodes.csv [--window 500]
"""

import argparse
from collections import defaultdict

import numpy as np

from ionforge.environment import moving_average, read_episodes_csv


def per_episode(rows):
    eps = defaultdict(dict)
    for r in rows:
        rec = eps[r["agent"]].setdefault(r["episode"], {"reward": 0.0, "eps_t": r["eps_t"],
                                                        "len": 0, "best": 1.0})
        rec["reward"] += r["reward"]
        rec["len"] = r["circuit_len"]
        rec["best"] = min(rec["best"], r["best_cost"])
    return {a: [d[e] for e in sorted(d)] for a, d in eps.items()}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("csv")
    p.add_argument("--window", type=int, default=500)
    p.add_argument("--eps-min", type=float, default=1e-2)
    args = p.parse_args()
    for agent, eps in per_episode(read_episodes_csv(args.csv)).items():
        rewards = np.array([e["reward"] for e in eps])
        ma = moving_average(rewards, args.window)
        hits = [e["len"] for e in eps if e["best"] <= args.eps_min]
        print(f"agent {agent}: {len(eps)} episodes, eps_t {eps[0]['eps_t']:.3g} -> "
              f"{eps[-1]['eps_t']:.4g}, solutions {len(hits)}, shortest "
              f"{min(hits) if hits else '-'}")
        if ma.size:
            marks = np.linspace(0, ma.size - 1, 6).astype(int)
            print("  reward MA: " + "  ".join(f"{i + args.window}:{ma[i]:.2f}" for i in marks))


if __name__ == "__main__":
    main()
