"""Dense GP regression and small numerical reference utilities."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import comb

__all__ = [
    "DensePosterior",
    "OracleError",
    "MAX_DENSE",
    "gram",
    "exact_posterior",
    "condition_gaussian",
    "avg_marginal_kld",
    "gaussian_kld",
    "fd_derivative",
]

log = logging.getLogger(__name__)

MAX_DENSE = 5000
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DensePosterior:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    loglik: float


def gram(kernel, t1, t2=None) -> np.ndarray:
    """``k(|t1_i - t2_j|)`` for a stationary kernel evaluated at lags >= 0."""
    t1 = np.asarray(t1, dtype=float).ravel()
    t2 = t1 if t2 is None else np.asarray(t2, dtype=float).ravel()
    lag = np.abs(t1[:, None] - t2[None, :])
    return np.asarray(kernel(lag), dtype=float)


def _cholesky(K: np.ndarray):
    scale = float(np.mean(np.diag(K)))
    for jit in _JITTERS:
        try:
            L = linalg.cholesky(K + jit * scale * np.eye(len(K)), lower=True)
        except linalg.LinAlgError:
            continue
        if jit:
            log.warning("dense Gram matrix needed jitter %.0e of the mean diagonal", jit)
        return L
    cond = np.linalg.cond(K)
    raise OracleError(f"Gram matrix factorization failed (condition estimate {cond:.3e})")


def exact_posterior(kernel, times, values, sigma2: float, query_times=None) -> DensePosterior:
    """Textbook GP regression with Gram matrix ``K + sigma2 I``.

    ``kernel`` maps non-negative lags to covariances.  Query defaults to
    the training times.  Refuses more than ``MAX_DENSE`` points.
    """
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if len(t) != len(y):
        raise ValueError("times and values differ in length")
    if len(t) == 0:
        raise ValueError("no data")
    if len(t) > MAX_DENSE:
        raise ValueError(f"dense oracle limited to {MAX_DENSE} points, got {len(t)}")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    q = t if query_times is None else np.asarray(query_times, dtype=float).ravel()

    K = gram(kernel, t) + sigma2 * np.eye(len(t))
    L = _cholesky(K)
    alpha = linalg.cho_solve((L, True), y)
    Kq = gram(kernel, q, t)
    mean = Kq @ alpha
    V = linalg.solve_triangular(L, Kq.T, lower=True)
    prior = np.asarray(kernel(np.zeros(len(q))), dtype=float)
    var = np.maximum(prior - np.sum(V * V, axis=0), 0.0)
    ll = -0.5 * (y @ alpha) - np.sum(np.log(np.diag(L))) - 0.5 * len(t) * math.log(2 * math.pi)
    return DensePosterior(q, mean, var, float(ll))


def condition_gaussian(mean, cov, idx_obs, values):
    """Condition a joint Gaussian on exact values at ``idx_obs``.

    Returns the mean and covariance of the remaining coordinates.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    idx_obs = np.asarray(idx_obs, dtype=int)
    rest = np.setdiff1d(np.arange(len(mean)), idx_obs)
    S_oo = cov[np.ix_(idx_obs, idx_obs)]
    S_ro = cov[np.ix_(rest, idx_obs)]
    gain = np.linalg.solve(S_oo, S_ro.T).T
    m = mean[rest] + gain @ (np.asarray(values, dtype=float) - mean[idx_obs])
    C = cov[np.ix_(rest, rest)] - gain @ S_ro.T
    return m, 0.5 * (C + C.T)


def gaussian_kld(m1, v1, m2, v2):
    """``KL(N(m1, v1) || N(m2, v2))`` elementwise."""
    m1, v1, m2, v2 = (np.asarray(x, dtype=float) for x in (m1, v1, m2, v2))
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise ValueError("variances must be > 0")
    r = v1 / v2
    return 0.5 * (r - 1.0 - np.log(r) + (m1 - m2) ** 2 / v2)


def avg_marginal_kld(approx, exact) -> float:
    """Mean pointwise KLD between two sequences of univariate Gaussians,
    each given as ``(means, variances)``."""
    m1, v1 = approx
    m2, v2 = exact
    if np.shape(m1) != np.shape(m2) or np.shape(v1) != np.shape(v2):
        raise ValueError("approx and exact must have equal lengths")
    return float(np.mean(gaussian_kld(m1, v1, m2, v2)))


def fd_derivative(kernel, n: int, tau: float, step: float = 1e-3) -> float:
    """``n``-th central difference
    ``sum_k (-1)^k C(n, k) f(tau + (n/2 - k) h) / h^n``."""
    if n < 0:
        raise ValueError("order must be >= 0")
    if n == 0:
        return float(kernel(tau))
    if tau - n * step / 2 <= 0:
        raise ValueError("stencil crosses the origin; move tau or shrink step")
    k = np.arange(n + 1)
    pts = tau + (n / 2 - k) * step
    vals = np.asarray(kernel(pts), dtype=float)
    return float(np.sum((-1.0) ** k * comb(n, k) * vals) / step**n)
