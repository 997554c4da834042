"""Acceptance criteria 1-11, one test each.

Every test prints (and records for the terminal summary) a single
``CRITERION n: PASS|FAIL ...`` line before asserting.
"""

import math
import time

import numpy as np
import pytest

from cases import EXACT_CONFIGS, random_problem
from conftest import ACCEPTANCE
from hida_matern.approx import FitProblem, fit_mixture, make_grid, parseval_check
from hida_matern.cli import _bench_posterior
from hida_matern.datasets import SMToyConfig, mauna_loa_kernel, mauna_loa_synthetic, sm_toy, \
    sm_toy_prior
from hida_matern.inference import Dataset, GaussianState, joseph_update, kalman_filter, \
    low_rank_update, predict, rts_smooth
from hida_matern.kernels import (
    CanonicalFilter,
    HidaMaternSpec,
    MixtureSpec,
    eval_kernel,
    calibrate_filter,
    covariance_from_filter,
    kernel_function,
    mixture_eval,
    to_exp_poly,
)
from hida_matern.oracle import avg_marginal_kld, exact_posterior
from hida_matern.references import SquaredExponential
from hida_matern.ssm import (
    StateSpaceModel,
    assemble_mixture,
    build_K_S,
    conditioning_diagnostics,
    correlation_transform,
    marginalize_naive,
    naive_block_formula,
    sde_dynamics,
    structured_inverse_K0,
)

TEST_MODELS = {**EXACT_CONFIGS, "mauna": mauna_loa_kernel()}


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def test_criterion_01_oracle_equivalence():
    worst = {"mean": 0.0, "var": 0.0, "ll": 0.0}
    for i, (name, mix) in enumerate(sorted(EXACT_CONFIGS.items())):
        t, y = random_problem(mix, M=200, noise=0.1, seed=100 + i)
        model = assemble_mixture(mix, 0.1)
        res = kalman_filter(model, Dataset(t, y))
        sm = rts_smooth(model, res)
        H = model.H[0]
        mean = sm.means @ H
        var = np.einsum("i,kij,j->k", H, sm.covs, H)
        ex = exact_posterior(kernel_function(mix), t, y, 0.1)
        worst["mean"] = max(worst["mean"], np.max(np.abs(mean - ex.mean)) / math.sqrt(mix.variance))
        worst["var"] = max(worst["var"], np.max(np.abs(var - ex.variance)) / mix.variance)
        worst["ll"] = max(worst["ll"], abs(res.loglik - ex.loglik))
    ok = all(v < 1e-6 for v in worst.values())
    report(1, ok, ", ".join(f"max {k} err {v:.2e}" for k, v in worst.items()) + "; tol 1e-6")


def test_criterion_02_stationary_covariance():
    rng = np.random.default_rng(2)
    worst, exact = 0.0, True
    for mix in TEST_MODELS.values():
        model = assemble_mixture(mix, 0.1)
        P = model.P_inf
        exact &= np.array_equal(P, model._native_diag([b.K0 for b in model.blocks]))
        exact &= np.allclose(P, model.K_S(0.0), rtol=0, atol=1e-14)
        for d in rng.uniform(1e-3, 20.0, 20):
            pr = model.transition(d)
            worst = max(worst, np.max(np.abs(pr.A @ P @ pr.A.conj().T + pr.Q - P)))
    report(2, worst < 1e-8 and exact,
           f"max |A P A^H + Q - P| = {worst:.2e} (tol 1e-8); P_inf == K^S(0): {exact}")


def test_criterion_03_semigroup_and_generator():
    rng = np.random.default_rng(3)
    worst_sg, worst_taylor = 0.0, 0.0
    d = 1e-6
    for mix in TEST_MODELS.values():
        model = assemble_mixture(mix, 0.1)
        for d1, d2 in rng.uniform(0.01, 5.0, (100, 2)):
            A12 = model.transition(d1 + d2).A
            err = np.linalg.norm(A12 - model.transition(d1).A @ model.transition(d2).A)
            worst_sg = max(worst_sg, err / np.linalg.norm(A12))
        # second-order Taylor residual must be O(d^3): scale by |F|^3 d^3
        F = sde_dynamics(model)
        dt = 1e-3
        resid = model.transition(dt).A - (np.eye(model.dim) + dt * F + dt**2 * F @ F / 2)
        worst_taylor = max(worst_taylor, np.max(np.abs(resid)) / (np.max(np.abs(F)) * dt) ** 3)
    # forward difference on the Matern 3/2 generator
    m32 = StateSpaceModel.from_spec(HidaMaternSpec(1.0, math.sqrt(3), 0.0, 1), 0.1)
    F = sde_dynamics(m32)
    fd_err = np.max(np.abs((m32.transition(d).A - np.eye(m32.dim)) / d - F))
    ok = worst_sg < 1e-8 and fd_err < 1e-4 and worst_taylor < 1.0
    report(3, ok, f"semigroup rel err {worst_sg:.2e} (tol 1e-8); Matern 3/2 "
                  f"|(A(1e-6)-I)/1e-6 - F| {fd_err:.2e} (tol 1e-4); "
                  f"Taylor residual / (|F| d)^3 {worst_taylor:.2f} (< 1)")


def test_criterion_04_conditioning():
    spec = HidaMaternSpec(1.0, 1.0, 0.0, 8)
    d0 = conditioning_diagnostics(spec, 0.0)
    raw0, corr0 = np.linalg.cond(d0["K_raw"]), np.linalg.cond(d0["K_corr"])
    ratio = raw0 / corr0
    ordinal = []
    for tau in (0.001, 0.01, 0.1, 0.5):
        d = conditioning_diagnostics(spec, tau)
        ordinal.append(np.linalg.cond(d["K_corr"]) < np.linalg.cond(d["K_raw"]))
    report(4, ratio >= 1e3 and all(ordinal),
           f"cond K(0) raw {raw0:.4g} -> transformed {corr0:.4g}, reduction {ratio:.1f} "
           f"(need >= 1e3); transformed < raw at tau>0: {all(ordinal)}")


def test_criterion_05_low_rank_update():
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(1000):
        n = 8
        B = rng.standard_normal((n, n))
        pred = GaussianState(rng.standard_normal(n), B @ B.T + 0.1 * np.eye(n))
        size = 1 + k % 2
        idx = rng.choice(n, size=size, replace=False)
        w = rng.uniform(0.2, 2.0, size)
        H = np.zeros((1, n))
        H[0, idx] = w
        y, r = rng.standard_normal(), rng.uniform(0.01, 2.0)
        lr = low_rank_update(pred, y, r, (idx, w))
        jo = joseph_update(pred, y, H, r)
        worst = max(worst, np.max(np.abs(lr.m - jo.m)), np.max(np.abs(lr.P - jo.P)))
    report(5, worst < 1e-10, f"max deviation from Joseph form {worst:.2e} over 1000 draws (tol 1e-10)")


def test_criterion_06_canonical_filter():
    filt = calibrate_filter(CanonicalFilter(((1.0, 1, math.sqrt(3)),)))
    spec = HidaMaternSpec(1.0, math.sqrt(3), 0.0, 1)
    errs = [abs(covariance_from_filter(filt, t) - eval_kernel(spec, t)) for t in (0.0, 0.5, 1.0)]
    c = filt.terms[0][0].real
    report(6, max(errs) < 1e-6, f"max |cov - k| {max(errs):.2e} (tol 1e-6); calibrated c = {c:.6f}")


def test_criterion_07_structural_sparsity():
    worst_zero, worst_inv = 0.0, 0.0
    for p in range(9):
        form = to_exp_poly(HidaMaternSpec(1.0, 1.0, 0.0, p))
        K = build_K_S(form, p + 1, 0.0)
        odd = np.add.outer(np.arange(p + 1), np.arange(p + 1)) % 2 == 1
        if odd.any():
            worst_zero = max(worst_zero, np.max(np.abs(K[odd])) / np.max(np.abs(K)))
        _, Kt = correlation_transform(K)
        worst_inv = max(worst_inv, np.max(np.abs(structured_inverse_K0(Kt, True) - np.linalg.inv(Kt))))
    report(7, worst_zero < 1e-12 and worst_inv < 1e-10,
           f"max |odd entry|/scale {worst_zero:.1e} (tol 1e-12); "
           f"max |block inverse - dense inverse| {worst_inv:.2e} (tol 1e-10)")


def test_criterion_08_naive_marginalization():
    model = StateSpaceModel.from_spec(HidaMaternSpec(1.0, math.sqrt(7), 0.0, 3), 0.1)
    worst = 0.0
    for d in (0.01, 0.1, 1.0):
        L1, S1 = marginalize_naive(model, d, 2)
        L2, S2 = naive_block_formula(model, d, 2)
        worst = max(worst, np.max(np.abs(L1 - L2)), np.max(np.abs(S1 - S2)))
    report(8, worst < 1e-10, f"max |marginalised - block formula| {worst:.2e} (tol 1e-10)")


@pytest.mark.slow
def test_criterion_09_scaling():
    toy = SMToyConfig()
    mix = sm_toy_prior(toy)
    model = assemble_mixture(mix, toy.obs_noise)
    sizes = (10_000, 20_000, 40_000)
    data = {M: sm_toy(M, seed=9) for M in (*sizes, 50_000)}
    _bench_posterior(model, *data[10_000])  # warm-up
    times = {M: min(_bench_posterior(model, *data[M])[0] for _ in range(3)) for M in sizes}
    ratios = [times[b] / times[a] for a, b in zip(sizes, sizes[1:])]
    t50 = _bench_posterior(model, *data[50_000])[0]
    t, y = sm_toy(2000, seed=10)
    _, mean, var = _bench_posterior(model, t, y)
    ex = exact_posterior(kernel_function(mix), t, y, toy.obs_noise)
    kld = avg_marginal_kld((mean, var), (ex.mean, ex.variance))
    ok = all(1.5 <= r <= 2.6 for r in ratios) and t50 < 60 and kld < 1e-9
    report(9, ok, f"doubling ratios {', '.join(f'{r:.2f}' for r in ratios)} (need [1.5, 2.6]); "
                  f"M=5e4 {t50:.2f} s (< 60); KLD at M=2000 {kld:.1e} (< 1e-9)")


@pytest.mark.slow
def test_criterion_10_approximation():
    se = SquaredExponential(1.0, 1.0)
    se_fit = fit_mixture(FitProblem.build(se, 4, 2), restarts=8, seed=0)
    target = MixtureSpec((
        (0.5, HidaMaternSpec(1.0, 1.0, 0.0, 2)),
        (0.3, HidaMaternSpec(1.0, 0.5, 2.0, 2)),
        (0.15, HidaMaternSpec(1.0, 2.0, 5.0, 2)),
        (0.05, HidaMaternSpec(1.0, 0.3, 8.0, 2)),
    ))
    ref = lambda t: mixture_eval(target, t)  # noqa: E731
    fam_fit = fit_mixture(FitProblem(ref, (2, 2, 2, 2), make_grid(ref)), restarts=8, seed=0)
    d_tau, d_omega = parseval_check(se, se_fit.mixture, make_grid(se))
    gap = abs(d_tau - d_omega) / d_omega
    ok = se_fit.relative_error < 5e-2 and fam_fit.relative_error < 1e-8 and gap < 0.05
    report(10, ok, f"SE rel err {se_fit.relative_error:.2e} (< 5e-2); in-family "
                   f"{fam_fit.relative_error:.2e} (< 1e-8); Parseval gap {gap:.2e} (< 5%)")


def test_criterion_11_mauna_loa_extrapolation():
    d = mauna_loa_synthetic(seed=0)
    model = assemble_mixture(mauna_loa_kernel(), 0.01)
    pred = predict(model, Dataset(d.t_train, d.y_train), d.t_test, components=True)
    rmse = math.sqrt(np.mean((pred.mean - d.y_test) ** 2))
    base = math.sqrt(np.mean((d.y_train.mean() - d.y_test) ** 2))
    corr = np.corrcoef(pred.component_means[0], d.seasonal_test)[0, 1]
    report(11, rmse < base and corr > 0.9,
           f"RMSE {rmse:.3f} vs training-mean {base:.3f}; seasonal corr {corr:.3f} (> 0.9)")
