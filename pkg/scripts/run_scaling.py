"""Filter + smoother wall time on the two-term spectral-mixture toy data."""

import argparse

from hida_matern.cli import run_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[2000, 10_000, 20_000, 40_000, 50_000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = run_bench(args.sizes, seed=args.seed)
    print(f"{'M':>8} {'seconds':>9} {'avg KLD':>10}")
    prev = None
    for M, sec, kld in rows:
        ratio = "" if prev is None else f"  x{sec / prev:.2f}"
        print(f"{M:8d} {sec:9.3f} {kld:10.2e}{ratio}")
        prev = sec


if __name__ == "__main__":
    main()
