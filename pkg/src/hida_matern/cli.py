"""Command-line entry point: ``hida-matern <command> [flags]``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .approx import FitProblem, fit_mixture, parseval_check
from .datasets import SMToyConfig, sm_toy, sm_toy_prior
from .inference import Dataset, SearchConfig, fit_hyperparameters, kalman_filter, predict, \
    rts_smooth, sample_prior
from .io import ExperimentConfig, fmt, read_series_csv, write_matrix_dump, \
    write_predictions_csv, write_samples_csv, write_table_csv
from .kernels import HidaMaternSpec, kernel_function, mixture_eval, mixture_psd, mixture_to_json
from .oracle import avg_marginal_kld, exact_posterior
from .references import REFERENCE_NAMES, make_reference, reference_psd
from .ssm import assemble_mixture, conditioning_diagnostics

log = logging.getLogger("hida_matern")


class UsageError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.data is not None:
        cfg.data = args.data
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _need_kernel(cfg):
    if cfg.kernel is None:
        raise ValueError("config has no kernel")
    return cfg.kernel


def _load_data(cfg) -> Dataset:
    if not cfg.data:
        raise ValueError("no data file given (use --data or the config 'data' field)")
    t, y = read_series_csv(cfg.data)
    return Dataset.from_arrays(t, y)


def cmd_fit(cfg: ExperimentConfig, out: Path, no_opt: bool) -> None:
    mix = _need_kernel(cfg)
    data = _load_data(cfg)
    noise = cfg.obs_noise
    if no_opt:
        model = assemble_mixture(mix, noise)
        ll = kalman_filter(model, data, store=False).loglik
    else:
        opts = cfg.options
        search = SearchConfig(
            n_starts=int(opts.get("n_starts", 4)),
            seed=cfg.seed,
            max_iter=int(opts.get("max_iter", 600)),
            fit_noise=bool(opts.get("fit_noise", True)),
        )
        fit = fit_hyperparameters(mix, data, noise, search)
        mix, noise, ll = fit.mixture, fit.obs_noise, fit.loglik
    if not math.isfinite(ll):
        raise RuntimeError("log-likelihood is not finite")
    fitted = ExperimentConfig(mix, noise, cfg.data, cfg.query, cfg.seed, cfg.options)
    (out / "fitted.json").write_text(fitted.to_json() + "\n")
    (out / "report.txt").write_text(
        f"n_data {len(data)}\noptimized {not no_opt}\nobs_noise {fmt(noise)}\n"
        f"log_likelihood {fmt(ll)}\n"
    )
    print(f"log_likelihood {fmt(ll)}")


def cmd_predict(cfg: ExperimentConfig, out: Path, no_opt: bool) -> None:
    mix = _need_kernel(cfg)
    q = cfg.query_times()
    if len(q) == 0:
        raise ValueError("query grid is empty")
    data = _load_data(cfg)
    model = assemble_mixture(mix, cfg.obs_noise)
    pred = predict(model, data, q)
    write_predictions_csv(out / "predictions.csv", q, pred.mean, pred.variance)


def cmd_sample(cfg: ExperimentConfig, out: Path, no_opt: bool) -> None:
    mix = _need_kernel(cfg)
    t = np.sort(cfg.query_times())
    if len(t) == 0:
        raise ValueError("sample grid is empty")
    n_draws = int(cfg.options.get("n_draws", 1))
    model = assemble_mixture(mix, cfg.obs_noise)
    draws = sample_prior(model, t, seed=cfg.seed, n_draws=n_draws)
    write_samples_csv(out / "samples.csv", t, draws)


def cmd_approx(cfg: ExperimentConfig, out: Path, no_opt: bool) -> None:
    opts = cfg.options
    name = opts.get("reference")
    if name is None:
        raise UsageError("options.reference is required")
    if str(name).lower() not in REFERENCE_NAMES:
        raise UsageError(f"unknown reference kernel {name!r}; choose from {', '.join(REFERENCE_NAMES)}")
    ref = make_reference(name, **opts.get("params", {}))
    problem = FitProblem.build(
        ref, int(opts.get("n_components", 4)), int(opts.get("p", 2)),
        int(opts.get("n_nodes", 2048)),
    )
    res = fit_mixture(problem, int(opts.get("restarts", 8)), cfg.seed)
    (out / "mixture.json").write_text(mixture_to_json(res.mixture) + "\n")
    tau = problem.grid.tau
    write_table_csv(out / "kernel_curve.csv", ["tau", "k_ref", "k_fit"],
                    [tau, ref(tau), mixture_eval(res.mixture, tau)])
    dt = tau[1] - tau[0]
    omega = np.linspace(-math.pi / dt, math.pi / dt, 4097)
    tg = tau if getattr(ref, "psd", None) is None else None
    write_table_csv(out / "psd_curve.csv", ["omega", "S_ref", "S_fit"],
                    [omega, reference_psd(ref, omega, tg), mixture_psd(res.mixture, omega)])
    d_tau, d_omega = parseval_check(ref, res.mixture, problem.grid)
    (out / "report.txt").write_text(
        f"reference {name}\ndistance {fmt(res.distance)}\n"
        f"relative_error {fmt(res.relative_error)}\n"
        f"parseval_tau {fmt(d_tau)}\nparseval_omega {fmt(d_omega)}\n"
    )
    print(f"relative_error {fmt(res.relative_error)}")


def _bench_posterior(model, t, y):
    data = Dataset(t, y)
    t0 = time.perf_counter()
    res = kalman_filter(model, data)
    sm = rts_smooth(model, res)
    elapsed = time.perf_counter() - t0
    H = model.H[0]
    mean = sm.means @ H
    var = np.einsum("i,kij,j->k", H, sm.covs, H)
    return elapsed, mean, var


def run_bench(sizes, seed: int = 0, kld_max: int = 2000, p: int = 2):
    """Time filter+smoother on the toy data; KLD against the dense oracle
    for sizes up to ``kld_max``.  Returns rows ``(M, seconds, kld)``."""
    toy = SMToyConfig()
    mix = sm_toy_prior(toy, p)
    model = assemble_mixture(mix, toy.obs_noise)
    rows = []
    for i, M in enumerate(sizes):
        t, y = sm_toy(int(M), seed=seed + i, cfg=toy)
        elapsed, mean, var = _bench_posterior(model, t, y)
        kld = float("nan")
        if M <= kld_max:
            ex = exact_posterior(kernel_function(mix), t, y, toy.obs_noise)
            kld = avg_marginal_kld((mean, var), (ex.mean, ex.variance))
        rows.append((int(M), elapsed, kld))
        log.info("M=%d: %.3f s, kld %.3e", M, elapsed, kld)
    return rows


def cmd_bench(cfg: ExperimentConfig, out: Path, no_opt: bool) -> None:
    opts = cfg.options
    sizes = [int(s) for s in opts.get("sizes", [1000, 10000, 50000])]
    rows = run_bench(sizes, cfg.seed, int(opts.get("kld_max_size", 2000)), int(opts.get("p", 2)))
    write_table_csv(out / "bench.csv", ["M", "seconds", "kld"], list(zip(*rows)))


def _cond(M) -> float:
    M = np.asarray(M)
    if not np.any(M):
        return math.inf
    return float(np.linalg.cond(M))


def cmd_condition(cfg: ExperimentConfig, out: Path, no_opt: bool) -> None:
    opts = cfg.options
    if cfg.kernel is not None:
        spec = cfg.kernel.specs[0]
    else:
        spec = HidaMaternSpec(float(opts.get("sigma2", 1.0)), float(opts.get("a", 1.0)),
                              float(opts.get("b", 0.0)), int(opts.get("p", 8)))
    taus = [float(x) for x in opts.get("taus", [0.0, 0.001, 0.01, 0.1, 0.5])]
    names = ["K", "A", "Q"]
    cols = {f"cond_{n}_{v}": [] for n in names for v in ("raw", "corr")}
    with open(out / "matrices.txt", "w") as fh:
        for tau in taus:
            d = conditioning_diagnostics(spec, tau)
            for n in names:
                for v in ("raw", "corr"):
                    key = f"{n}_{v}"
                    cols[f"cond_{key}"].append(_cond(d[key]))
                    write_matrix_dump(fh, key, tau, d[key])
    write_table_csv(out / "conditioning.csv", ["tau", *cols], [taus, *cols.values()])


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "sample": cmd_sample,
    "approx": cmd_approx,
    "bench": cmd_bench,
    "condition": cmd_condition,
}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hida-matern",
                                     description="State-space GP tools for Hida-Matern kernels")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment JSON")
        p.add_argument("--data", help="t,y CSV (overrides config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=_seed, default=None)
        p.add_argument("--no-opt", action="store_true", help="skip hyperparameter search")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args.no_opt)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
