"""Least-squares fits of Hida-Matern mixtures to reference kernels.

The objective is the squared L2 distance over lags ``[0, T]``,
approximated with the trapezoid rule on a uniform grid.  Each component
is parameterised by ``(log a, b, log c)`` so rates and weights stay
positive; frequencies enter through ``|b|``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .kernels import HidaMaternSpec, MixtureSpec, _matern_weights, mixture_eval, mixture_psd
from .references import reference_psd

__all__ = [
    "Grid",
    "FitProblem",
    "ApproxResult",
    "make_grid",
    "l2_distance",
    "fit_mixture",
    "psd_l2_distance",
    "parseval_check",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Grid:
    tau: np.ndarray
    weights: np.ndarray

    @classmethod
    def uniform(cls, T: float, n: int = 2048) -> "Grid":
        if not T > 0 or n < 2:
            raise ValueError("need T > 0 and at least two nodes")
        tau = np.linspace(0.0, T, n)
        w = np.full(n, T / (n - 1))
        w[[0, -1]] *= 0.5
        return cls(tau, w)

    @property
    def T(self) -> float:
        return float(self.tau[-1])


def _efold(ref) -> float:
    """First lag where ``|k|`` drops below ``k(0)/e`` (coarse scan)."""
    k0 = float(ref(0.0))
    T = 1e-3
    while T < 1e8:
        tau = np.linspace(0, T, 257)
        below = np.flatnonzero(np.abs(ref(tau)) < k0 / math.e)
        if below.size:
            return float(tau[below[0]])
        T *= 4
    raise ValueError("reference kernel does not decay")


def make_grid(ref, n_nodes: int = 2048, T: float | None = None, rel: float = 1e-6,
              tail: float = 2.0) -> Grid:
    """Uniform trapezoid grid on ``[0, T]``.

    Without an explicit ``T`` the grid extends ``tail`` times past the last
    lag where ``|k_ref| >= rel * k_ref(0)``; the zero tail stops the fitted
    mixture from swinging back up right after the cut-off.  Slowly
    decaying or periodic references are capped at ``min(1000, (n_nodes - 1) / 4)`` e-folding lags so the
    grid still resolves the kernel.
    """
    if T is None:
        k0 = abs(float(ref(0.0)))
        if k0 == 0:
            raise ValueError("reference kernel vanishes at zero lag")
        te = _efold(ref)
        cap = te * min(1000.0, (n_nodes - 1) / 4.0)
        scan = np.linspace(0.0, cap, 200_001)
        above = np.flatnonzero(np.abs(ref(scan)) >= rel * k0)
        T = float(scan[min(above[-1] + 1, len(scan) - 1)])
        if T >= cap:
            T = cap
            log.info("reference still above %.0e at the grid cap T=%.4g", rel, cap)
        else:
            T = min(tail * T, cap)
    return Grid.uniform(T, n_nodes)


def l2_distance(ref, mix: MixtureSpec, grid: Grid) -> float:
    """``int_0^T (k_ref - k_mix)^2 dtau`` by the trapezoid rule."""
    r = np.asarray(ref(grid.tau), dtype=float) - mixture_eval(mix, grid.tau)
    return float(grid.weights @ r**2)


@dataclass(frozen=True, eq=False)
class FitProblem:
    """Reference kernel, per-component orders and quadrature grid."""

    reference: object
    orders: tuple[int, ...]
    grid: Grid
    log_a_bounds: tuple[float, float] = (-12.0, 12.0)

    def __post_init__(self):
        if len(self.orders) < 1:
            raise ValueError("template needs at least one component")
        object.__setattr__(self, "orders", tuple(int(p) for p in self.orders))

    @classmethod
    def build(cls, reference, n_components: int = 4, p: int = 2,
              n_nodes: int = 2048, T: float | None = None) -> "FitProblem":
        return cls(reference, (p,) * n_components, make_grid(reference, n_nodes, T))

    @property
    def target(self) -> np.ndarray:
        return np.asarray(self.reference(self.grid.tau), dtype=float)


@dataclass(frozen=True, eq=False)
class ApproxResult:
    mixture: MixtureSpec
    distance: float
    relative_error: float
    start_distances: tuple[float, ...]


class _Evaluator:
    """Fast mixture evaluation on a fixed grid for the optimiser."""

    def __init__(self, problem: FitProblem):
        self.tau = problem.grid.tau
        self.sw = np.sqrt(problem.grid.weights)
        self.orders = problem.orders
        self.target = problem.target
        self.poly_w = [np.array(_matern_weights(p)) for p in self.orders]

    def unpack(self, x):
        x = np.asarray(x).reshape(-1, 3)
        return np.exp(x[:, 0]), np.abs(x[:, 1]), np.exp(x[:, 2])

    def values(self, x) -> np.ndarray:
        a, b, c = self.unpack(x)
        out = np.zeros_like(self.tau)
        for ai, bi, ci, w in zip(a, b, c, self.poly_w):
            z = 2 * ai * self.tau
            poly = np.polynomial.polynomial.polyval(z, w)
            out += ci * np.cos(bi * self.tau) * np.exp(-ai * self.tau) * poly
        return out

    def residual(self, x) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            r = self.sw * (self.target - self.values(x))
        return np.where(np.isfinite(r), r, 1e150)

    def objective(self, x) -> float:
        r = self.residual(x)
        return float(r @ r)

    def mixture(self, x) -> MixtureSpec:
        a, b, c = self.unpack(x)
        comps = sorted(zip(b, a, c, self.orders))
        return MixtureSpec(tuple(
            (float(ci), HidaMaternSpec(1.0, float(ai), float(bi), p))
            for bi, ai, ci, p in comps
        ))


def _spectral_frequencies(problem: FitProblem) -> tuple[np.ndarray, np.ndarray]:
    """Frequency grid and normalised spectral mass of the reference."""
    tau, w = problem.grid.tau, problem.grid.weights
    dt = tau[1] - tau[0]
    omega = np.linspace(0.0, math.pi / dt, 2049)
    S = np.abs(np.cos(np.outer(omega, tau)) @ (w * problem.target))
    cdf = np.cumsum(S)
    return omega, cdf / cdf[-1]


def _random_start(problem: FitProblem, rng, omega, cdf, k0, te) -> np.ndarray:
    L = len(problem.orders)
    a = np.exp(rng.uniform(math.log(0.2), math.log(5.0), L)) / te
    b = np.interp(rng.uniform(0.0, 1.0, L), cdf, omega)
    c = np.full(L, abs(k0) / L) * np.exp(rng.normal(0.0, 0.3, L))
    return np.column_stack([np.log(a), b, np.log(c)]).ravel()


def fit_mixture(problem: FitProblem, restarts: int = 8, seed: int = 0,
                max_iter: int | None = None, polish: bool = True) -> ApproxResult:
    """Multi-start Nelder-Mead fit followed by a least-squares polish.

    Returns the best candidate over all starts (lowest distance, ties to
    the lowest start index) with components sorted by ``b`` then ``a``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    ev = _Evaluator(problem)
    rng = np.random.Generator(np.random.PCG64(seed))
    k0 = float(problem.reference(0.0))
    te = _efold(problem.reference)
    omega, cdf = _spectral_frequencies(problem)
    n = 3 * len(problem.orders)
    max_iter = max_iter or 400 * n
    lo, hi = problem.log_a_bounds

    best_x, best_val, dists = None, math.inf, []
    for i in range(restarts):
        x0 = _random_start(problem, rng, omega, cdf, k0, te)
        res = optimize.minimize(
            ev.objective, x0, method="Nelder-Mead",
            options={"maxiter": max_iter, "maxfev": 2 * max_iter,
                     "xatol": 1e-10, "fatol": 1e-16, "adaptive": True},
        )
        x, val = res.x, float(res.fun)
        if polish and math.isfinite(val):
            try:
                ls = optimize.least_squares(ev.residual, x, method="lm",
                                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
                val_ls = ev.objective(ls.x)
                if val_ls <= val:
                    x, val = ls.x, val_ls
            except (ValueError, np.linalg.LinAlgError):
                pass
        log_a = np.asarray(x).reshape(-1, 3)[:, 0]
        if np.any(log_a < lo) or np.any(log_a > hi) or not math.isfinite(val):
            val = math.inf
        dists.append(val)
        log.debug("restart %d: distance %.3e", i, val)
        if val < best_val:
            best_x, best_val = x, val
    if best_x is None:
        raise RuntimeError("every restart diverged")
    mix = ev.mixture(best_x)
    dist = l2_distance(problem.reference, mix, problem.grid)
    norm = float(problem.grid.weights @ problem.target**2)
    return ApproxResult(mix, dist, dist / norm, tuple(dists))


def psd_l2_distance(ref, mix: MixtureSpec, omega: np.ndarray, tau_grid=None) -> float:
    """``(1/2pi) int (S_ref - S_mix)^2 domega`` over a symmetric grid."""
    omega = np.asarray(omega, dtype=float)
    d = reference_psd(ref, omega, tau_grid) - mixture_psd(mix, omega)
    return float(np.trapezoid(d**2, omega) / (2 * math.pi))


def parseval_check(ref, mix: MixtureSpec, grid: Grid, omega: np.ndarray | None = None,
                   max_nodes: int = 2_000_000):
    """Return ``(lag-domain, frequency-domain)`` squared distances over the
    whole real line.

    The lag integral doubles the one-sided one and runs past ``grid.T``
    until the slowest mixture component has decayed by ``exp(-50)``, at
    the spacing of ``grid``.
    """
    dt = grid.tau[1] - grid.tau[0]
    if omega is None:
        omega = np.linspace(-math.pi / dt, math.pi / dt, 40_001)
    a_min = min(s.a for s in mix.specs)
    T = max(grid.T, 50.0 / a_min)
    n = int(min(max_nodes, math.ceil(T / dt) + 1))
    wide = Grid.uniform(T, n)
    tau_grid = wide.tau if getattr(ref, "psd", None) is None else None
    return 2.0 * l2_distance(ref, mix, wide), psd_l2_distance(ref, mix, omega, tau_grid)
