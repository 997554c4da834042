"""Kalman filtering, RTS smoothing and prediction for state-space GP models.

Models are duck-typed: anything with ``state_dim``, ``P0``, ``H`` (D x n),
``R`` (D x D) and ``discretize(deltas) -> (A, Q)`` over real states works,
which covers both ``StateSpaceModel`` and ``LinearGaussianModel``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .kernels import HidaMaternSpec, MixtureSpec
from .ssm import StateSpaceModel, assemble_mixture

__all__ = [
    "Dataset",
    "GaussianState",
    "FilterResult",
    "SmootherResult",
    "FilterError",
    "kalman_filter",
    "low_rank_update",
    "joseph_update",
    "rts_smooth",
    "predict",
    "Prediction",
    "sample_prior",
    "SearchConfig",
    "HyperFit",
    "fit_hyperparameters",
    "log_likelihood",
]

log = logging.getLogger(__name__)

_LOG2PI = math.log(2 * math.pi)


class FilterError(FloatingPointError):
    """Raised when the filter meets a non-positive or non-finite innovation."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sorted observation times with values; ``observed`` flags real data.

    Unobserved entries are prediction-only pseudo-points and their values
    are ignored (conventionally NaN).
    """

    times: np.ndarray
    values: np.ndarray
    observed: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        y = np.asarray(self.values, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        obs = (np.ones(len(t), bool) if self.observed is None
               else np.asarray(self.observed, bool).ravel())
        if len(t) == 0:
            raise ValueError("dataset is empty")
        if not (len(y) == len(t) == len(obs)):
            raise ValueError("times, values and mask must have equal length")
        if not np.all(np.isfinite(t)):
            raise ValueError("times must be finite")
        if np.any(np.diff(t) < 0):
            raise ValueError("times must be sorted; use Dataset.from_arrays")
        if not np.all(np.isfinite(y[obs])):
            raise ValueError("observed values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "observed", obs)

    @classmethod
    def from_arrays(cls, times, values, observed=None) -> "Dataset":
        """Sort by time (stable) and build a dataset."""
        t = np.asarray(times, dtype=float).ravel()
        order = np.argsort(t, kind="stable")
        y = np.asarray(values, dtype=float)
        obs = None if observed is None else np.asarray(observed, bool)[order]
        return cls(t[order], y[order], obs)

    def __len__(self):
        return len(self.times)

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())


@dataclass(frozen=True, eq=False)
class GaussianState:
    m: np.ndarray
    P: np.ndarray


@dataclass(eq=False)
class FilterResult:
    times: np.ndarray
    observed: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    innovations: np.ndarray
    innovation_covs: np.ndarray
    loglik: float
    A: np.ndarray
    Q: np.ndarray
    trans_index: np.ndarray
    n_transitions: int

    def transition(self, k: int):
        """``(A, Q)`` used to move from step ``k - 1`` to step ``k``."""
        j = self.trans_index[k]
        return self.A[j], self.Q[j]


@dataclass(eq=False)
class SmootherResult:
    means: np.ndarray
    covs: np.ndarray
    loglik: float = float("nan")

    def state(self, k: int) -> GaussianState:
        return GaussianState(self.means[k], self.covs[k])


def _unique_gaps(deltas: np.ndarray, rtol: float = 1e-10):
    """Group gaps equal up to ``rtol`` of the largest gap (uniform grids built
    from floating-point arithmetic differ in the last bits)."""
    if len(deltas) == 0:
        return np.zeros(0), np.zeros(0, int)
    scale = max(float(deltas.max()), 1e-300)
    keys = np.round(deltas / (rtol * scale))
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return deltas[first], inverse


def low_rank_update(pred: GaussianState, y: float, sigma2: float, support) -> GaussianState:
    """Scalar observation update through a sparse observation vector.

    ``support = (idx, w)`` lists the state coordinates seen by the
    observation and their weights.  Only the columns ``P[:, idx]`` enter;
    the gain is never formed as a dense matrix.
    """
    idx, w = support
    idx = np.atleast_1d(np.asarray(idx, dtype=int))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if idx.size == 0:
        raise ValueError("support must be non-empty")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    m, P, _, _ = _lr_update(pred.m, pred.P, idx, w, float(y), float(sigma2))
    return GaussianState(m, P)


def _lr_update(m, P, idx, w, y, r):
    u = P[:, idx] @ w
    s = float(w @ u[idx]) + r
    if not (s > 0 and math.isfinite(s)):
        raise FilterError(f"innovation variance {s!r} is not positive")
    beta = y - float(w @ m[idx])
    if not math.isfinite(beta):
        raise FilterError("non-finite innovation")
    alpha = 1.0 / s
    m = m + (alpha * beta) * u
    P = P - alpha * np.outer(u, u)
    return m, P, beta, s


def joseph_update(pred: GaussianState, y, H, R) -> GaussianState:
    """Joseph-form update ``(I - K H) P (I - K H)^T + K R K^T``."""
    H = np.atleast_2d(H)
    R = np.atleast_2d(R)
    y = np.atleast_1d(y)
    S = H @ pred.P @ H.T + R
    K = np.linalg.solve(S, H @ pred.P).T
    m = pred.m + K @ (y - H @ pred.m)
    I_KH = np.eye(len(pred.m)) - K @ H
    P = I_KH @ pred.P @ I_KH.T + K @ R @ K.T
    return GaussianState(m, P)


def _dense_update(m, P, H, R, y):
    S = H @ P @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise FilterError("innovation covariance is not positive definite") from exc
    v = y - H @ m
    if not np.all(np.isfinite(v)):
        raise FilterError("non-finite innovation")
    PHt = P @ H.T
    K = np.linalg.solve(S, PHt.T).T
    m = m + K @ v
    P = P - K @ PHt.T
    z = np.linalg.solve(L, v)
    ll = -0.5 * (len(v) * _LOG2PI + 2 * np.sum(np.log(np.diag(L))) + z @ z)
    return m, P, v, S, ll


def _support(model):
    sup = getattr(model, "support", None)
    return sup if sup is not None and model.H.shape[0] == 1 else None


def kalman_filter(model, data: Dataset, store: bool = True) -> FilterResult:
    """Forward pass from the stationary state; log-likelihood by innovations.

    One ``(A, Q)`` pair is computed per distinct gap; ``n_transitions`` on
    the result counts them.  With ``store=False`` only the log-likelihood
    and final state are kept.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    t = data.times
    M, n = len(t), model.state_dim
    D = model.H.shape[0]
    if data.values.shape[1] != D:
        raise ValueError(f"model emits {D} outputs but data has {data.values.shape[1]}")
    gaps, inverse = _unique_gaps(np.diff(t))
    if len(gaps):
        A, Q = model.discretize(gaps)
    else:
        A, Q = np.zeros((0, n, n)), np.zeros((0, n, n))
    trans_index = np.concatenate([[-1], inverse]).astype(int)

    sup = _support(model)
    if sup is not None:
        idx, w = sup
        r = float(model.R[0, 0])
    H, R = model.H, model.R

    keep = M if store else 1
    pm = np.zeros((keep, n))
    pP = np.zeros((keep, n, n))
    fm = np.zeros((keep, n))
    fP = np.zeros((keep, n, n))
    nu = np.full((keep, D), np.nan)
    S_all = np.full((keep, D, D), np.nan)

    m = np.zeros(n)
    P = np.array(model.P0, dtype=float)
    ll = 0.0
    ys = data.values
    obs = data.observed
    for k in range(M):
        if k > 0:
            j = trans_index[k]
            Ak = A[j]
            m = Ak @ m
            P = Ak @ P @ Ak.T + Q[j]
            P = 0.5 * (P + P.T)
        s = k if store else 0
        pm[s] = m
        pP[s] = P
        if obs[k]:
            if sup is not None:
                m, P, v, Sk = _lr_update(m, P, idx, w, float(ys[k, 0]), r)
                ll -= 0.5 * (_LOG2PI + math.log(Sk) + v * v / Sk)
                nu[s, 0] = v
                S_all[s, 0, 0] = Sk
            else:
                m, P, v, Sk, llk = _dense_update(m, P, H, R, ys[k])
                ll += llk
                nu[s] = v
                S_all[s] = Sk
        fm[s] = m
        fP[s] = P
    if not math.isfinite(ll):
        raise FilterError("log-likelihood is not finite")
    return FilterResult(
        times=t, observed=obs, pred_means=pm, pred_covs=pP, means=fm, covs=fP,
        innovations=nu, innovation_covs=S_all, loglik=ll, A=A, Q=Q,
        trans_index=trans_index, n_transitions=len(gaps),
    )


def log_likelihood(model, data: Dataset) -> float:
    return kalman_filter(model, data, store=False).loglik


def rts_smooth(model, res: FilterResult) -> SmootherResult:
    """Rauch-Tung-Striebel backward pass over a stored filter result.

    The gain ``G = P_k A^T (P_{k+1}^-)^{-1}`` comes from a linear solve
    against the predicted covariance; a least-squares solve takes over if
    that covariance is singular.
    """
    M = len(res.times)
    if res.means.shape[0] != M:
        raise ValueError("filter result was computed with store=False")
    ms = res.means.copy()
    Ps = res.covs.copy()
    for k in range(M - 2, -1, -1):
        A, _ = res.transition(k + 1)
        Pp = res.pred_covs[k + 1]
        APf = A @ res.covs[k]
        try:
            Gt = np.linalg.solve(Pp, APf)
        except np.linalg.LinAlgError:
            Gt = np.linalg.lstsq(Pp, APf, rcond=None)[0]
        G = Gt.T
        ms[k] = res.means[k] + G @ (ms[k + 1] - res.pred_means[k + 1])
        P = res.covs[k] + G @ (Ps[k + 1] - Pp) @ Gt
        Ps[k] = 0.5 * (P + P.T)
    return SmootherResult(ms, Ps, res.loglik)


@dataclass(frozen=True, eq=False)
class Prediction:
    """Posterior of the latent function at the query times (query order)."""

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    loglik: float
    component_means: np.ndarray | None = None
    component_variances: np.ndarray | None = None


def predict(model, data: Dataset, query_times, components: bool = False) -> Prediction:
    """Posterior mean and variance of ``H x(t)`` at ``query_times``.

    Queries become unobserved steps of one merged timeline, so a single
    filter/smoother pass serves them all.  With ``components=True`` and a
    ``StateSpaceModel`` the per-block posterior means/variances are
    returned as well (shape ``(n_blocks, n_query)``).
    """
    q = np.asarray(query_times, dtype=float).ravel()
    if not np.all(np.isfinite(q)):
        raise ValueError("query times must be finite")
    obs_t = data.times[data.observed]
    obs_y = data.values[data.observed]
    D = data.values.shape[1]
    t_all = np.concatenate([obs_t, q])
    y_all = np.concatenate([obs_y, np.full((len(q), D), np.nan)])
    flag = np.concatenate([np.ones(len(obs_t), bool), np.zeros(len(q), bool)])
    order = np.argsort(t_all, kind="stable")
    merged = Dataset(t_all[order], y_all[order], flag[order])
    res = kalman_filter(model, merged)
    sm = rts_smooth(model, res)

    pos = np.empty(len(order), int)
    pos[order] = np.arange(len(order))
    qpos = pos[len(obs_t):]
    means = sm.means[qpos]
    covs = sm.covs[qpos]
    H = model.H
    mean = means @ H.T
    var = np.einsum("di,kij,dj->kd", H, covs, H)
    if D == 1:
        mean, var = mean[:, 0], var[:, 0]
    comp_m = comp_v = None
    if components:
        if not isinstance(model, StateSpaceModel):
            raise TypeError("component decomposition needs a StateSpaceModel")
        Hs = np.stack([model.component_H(i)[0] for i in range(len(model.blocks))])
        comp_m = Hs @ means.T
        comp_v = np.einsum("bi,kij,bj->bk", Hs, covs, Hs)
    return Prediction(q, mean, np.maximum(var, 0.0), res.loglik, comp_m, comp_v)


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (Q + np.swapaxes(Q, -1, -2)))
    return V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def sample_prior(model, times, seed: int = 0, n_draws: int = 1, states: bool = False):
    """Draw prior paths by iterating the difference equation.

    Returns an array of shape ``(n_draws, len(times))`` of function values
    (``H x``, single-output models), or the states ``(n_draws, M, n)`` when
    ``states=True``.
    """
    t = np.asarray(times, dtype=float).ravel()
    if len(t) == 0:
        raise ValueError("no sample times")
    if np.any(np.diff(t) < 0):
        raise ValueError("times must be sorted")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = model.state_dim
    gaps, inverse = _unique_gaps(np.diff(t))
    if len(gaps):
        A, Q = model.discretize(gaps)
        L = _psd_sqrt(Q)
    x = rng.standard_normal((n_draws, n)) @ _psd_sqrt(model.P0).T
    out = np.empty((n_draws, len(t), n))
    out[:, 0] = x
    for k in range(1, len(t)):
        j = inverse[k - 1]
        x = x @ A[j].T + rng.standard_normal((n_draws, n)) @ L[j].T
        out[:, k] = x
    if states:
        return out
    return out @ model.H[0]


@dataclass(frozen=True)
class SearchConfig:
    """Multi-start Nelder-Mead over log-rates, log-weights, frequencies and
    log-noise.  Start 0 is the template itself; the others perturb it with
    Gaussian noise of scale ``perturb`` in the search coordinates."""

    n_starts: int = 4
    seed: int = 0
    perturb: float = 0.5
    max_iter: int = 600
    xatol: float = 1e-4
    fatol: float = 1e-6
    fit_noise: bool = True
    basis: str = "auto"


@dataclass(frozen=True, eq=False)
class HyperFit:
    mixture: MixtureSpec
    obs_noise: float
    loglik: float
    start_logliks: tuple = field(default=())
    best_start: int = 0


def _pack(mix: MixtureSpec, noise: float, fit_noise: bool):
    x = []
    for c, s in mix.components:
        x += [math.log(s.a), math.log(c)]
        if s.b > 0:
            x.append(s.b)
    if fit_noise:
        x.append(math.log(noise))
    return np.array(x)


def _unpack(x, template: MixtureSpec, noise: float, fit_noise: bool):
    comps, i = [], 0
    for _, s in template.components:
        a, c = math.exp(x[i]), math.exp(x[i + 1])
        i += 2
        b = 0.0
        if s.b > 0:
            b = float(x[i])
            i += 1
            if b <= 0:
                raise ValueError("frequency left the positive half-line")
        comps.append((c, HidaMaternSpec(s.sigma2, a, b, s.p)))
    if fit_noise:
        noise = math.exp(x[i])
    return MixtureSpec(tuple(comps)), noise


_BAD = 1e300


def fit_hyperparameters(template: MixtureSpec, data: Dataset, obs_noise: float,
                        config: SearchConfig = SearchConfig()) -> HyperFit:
    """Maximise the filter log-likelihood from several starting points.

    The template fixes the number of components and their orders.  The best
    start wins, ties going to the lowest start index; the result is a pure
    function of ``(template, data, obs_noise, config)``.
    """
    if config.n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    fit_noise = config.fit_noise

    def objective(x):
        try:
            mix, noise = _unpack(x, template, obs_noise, fit_noise)
            model = assemble_mixture(mix, noise, config.basis)
            ll = log_likelihood(model, data)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError, OverflowError):
            return _BAD
        return -ll if math.isfinite(ll) else _BAD

    x0 = _pack(template, obs_noise, fit_noise)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    starts = [x0] + [x0 + config.perturb * rng.standard_normal(len(x0))
                     for _ in range(config.n_starts - 1)]
    best, best_val, best_i, vals = None, _BAD, -1, []
    f0 = objective(x0)
    for i, xs in enumerate(starts):
        res = optimize.minimize(
            objective, xs, method="Nelder-Mead",
            options={"maxiter": config.max_iter, "xatol": config.xatol,
                     "fatol": config.fatol},
        )
        val = float(res.fun)
        vals.append(-val if val < _BAD else -math.inf)
        log.debug("start %d: loglik %.6g (%s)", i, -val, res.message)
        if val < best_val:
            best, best_val, best_i = res.x, val, i
    if best is None:
        raise RuntimeError("no start produced a finite likelihood")
    if f0 < best_val:
        best, best_val, best_i = x0, f0, 0
    mix, noise = _unpack(best, template, obs_noise, fit_noise)
    return HyperFit(mix, noise, -best_val, tuple(vals), best_i)
