"""Fit a Hida-Matern mixture to one of the reference kernels."""

import argparse

from hida_matern.approx import FitProblem, fit_mixture, parseval_check
from hida_matern.references import REFERENCE_NAMES, make_reference


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("reference", choices=REFERENCE_NAMES)
    ap.add_argument("-L", type=int, default=4, help="number of mixands")
    ap.add_argument("-p", type=int, default=2, help="order of each mixand")
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ref = make_reference(args.reference)
    problem = FitProblem.build(ref, args.L, args.p)
    res = fit_mixture(problem, args.restarts, args.seed)
    print(f"grid T={problem.grid.T:.4g}, relative L2 error {res.relative_error:.3e}")
    for c, s in zip(res.mixture.weights, res.mixture.specs):
        print(f"  c={c:.6g}  a={s.a:.6g}  b={s.b:.6g}  p={s.p}")
    d_tau, d_omega = parseval_check(ref, res.mixture, problem.grid)
    print(f"Parseval: lag domain {d_tau:.4e}, frequency domain {d_omega:.4e}")


if __name__ == "__main__":
    main()
