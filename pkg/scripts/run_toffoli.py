"""Desk-scale Toffoli compilation (five agents) followed by a log summary.

    python3 scripts/run_toffoli.py [--out runs/toffoli3] [--seed 2024]
"""

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

from ionforge.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/toffoli3")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--config", default=str(ROOT / "configs" / "toffoli3.toml"))
    args = p.parse_args()
    t0 = time.perf_counter()
    code = cli(["-v", "compile", "--config", args.config, "--out", args.out,
                "--seed", str(args.seed)])
    print(f"wall time {(time.perf_counter() - t0) / 60:.1f} min")
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    if summary["found"]:
        print(f"best length {summary['best_length']} (reference circuit: 10 gates)")
    subprocess.run([sys.executable, str(ROOT / "scripts" / "analyze_log.py"),
                    str(Path(args.out) / "episodes.csv")], check=False)
    return code


if __name__ == "__main__":
    sys.exit(main())
