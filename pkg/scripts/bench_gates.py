"""Fast cached gates against direct exponentiation, n = 1..10.

    python3 scripts/bench_gates.py [--n-max 10] [--repetitions 10]
"""

import argparse

from ionforge.cli import bench_gates


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--repetitions", type=int, default=10)
    args = p.parse_args()
    rows, speedups = bench_gates(args.n_min, args.n_max, args.repetitions)
    times = {(n, m): t for n, m, t, _ in rows}
    errs = {n: e for n, m, _, e in rows if m == "fast"}
    print(f"{'n':>3} {'oracle ms':>10} {'fast ms':>9} {'speedup':>8} {'max err':>9}")
    for n in sorted(speedups):
        print(f"{n:>3} {times[n, 'oracle'] * 1e3:>10.3f} {times[n, 'fast'] * 1e3:>9.3f} "
              f"{speedups[n]:>7.1f}x {errs[n]:>9.1e}")


if __name__ == "__main__":
    main()
