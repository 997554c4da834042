"""Condition numbers of raw vs correlation-transformed K^S for k_{H,p}(a=1, b=0)."""

import argparse

import numpy as np

from hida_matern import HidaMaternSpec
from hida_matern.ssm import conditioning_diagnostics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=8)
    ap.add_argument("--a", type=float, default=1.0)
    args = ap.parse_args()
    spec = HidaMaternSpec(1.0, args.a, 0.0, args.p)
    print(f"{'tau':>8} {'cond K raw':>12} {'cond K corr':>12} {'cond Q raw':>12} {'cond Q corr':>12}")
    for tau in (0.0, 0.001, 0.01, 0.1, 0.5):
        d = conditioning_diagnostics(spec, tau)
        c = [np.linalg.cond(d[k]) if np.any(d[k]) else np.inf
             for k in ("K_raw", "K_corr", "Q_raw", "Q_corr")]
        print(f"{tau:8.3f} " + " ".join(f"{v:12.4g}" for v in c))


if __name__ == "__main__":
    main()
