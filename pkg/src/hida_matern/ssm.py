"""State-space models built from kernel derivatives.

For a kernel ``k`` the derivative state ``(f, f', ..., f^{(n-1)})`` has the
multi-output covariance ``[K^S(tau)]_ij = (-1)^j k^{(i+j)}(tau)``, and the
discrete-time model over a gap ``delta`` is

    A = K^S(delta) K^S(0)^{-1},   Q = K^S(0) - A K^S(delta)^H,

with stationary covariance ``K^S(0)``.  Every block is stored in
correlation-transformed coordinates (unit-diagonal ``K^S(0)``).

Oscillatory components (``b > 0``) are complex blocks of size ``p + 1``.
Their state ``z`` is circular, so the covariance of ``[Re z; Im z]`` is the
real embedding ``[[Re K, -Im K], [Im K, Re K]]`` of the stored block; the
inference code filters in that real embedding because a real-valued
observation of ``z`` makes the posterior non-circular.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kernels import ExpPolyForm, HidaMaternSpec, MixtureSpec, eval_kernel, to_exp_poly

__all__ = [
    "TransitionPair",
    "Block",
    "StateSpaceModel",
    "LinearGaussianModel",
    "CalibrationError",
    "build_K_S",
    "derivative_cov",
    "correlation_transform",
    "structured_inverse_K0",
    "assemble_mixture",
    "complex_block_calibration",
    "transition",
    "sde_dynamics",
    "transform_linear",
    "marginalize_naive",
    "naive_block_formula",
    "realify",
    "CIRCULAR_SCALE",
    "conditioning_diagnostics",
]

log = logging.getLogger(__name__)

# Condition number of the transformed K^S(0) above which a complex block
# switches from derivative coordinates to demodulated coordinates.
COND_LIMIT = 1e8

# Covariance of a circular complex state relative to the stored block.
CIRCULAR_SCALE = 2.0


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TransitionPair:
    A: np.ndarray
    Q: np.ndarray


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2).conj())


def derivative_cov(values, n: int) -> np.ndarray:
    """Fill ``M_ij = (-1)^j values[i + j]``.

    ``values`` holds the ``2n - 1`` derivatives ``k^{(m)}``, optionally with
    leading batch axes moved last (shape ``(2n - 1, ...)``); the result has
    shape ``(..., n, n)``.
    """
    values = np.asarray(values)
    idx = np.add.outer(np.arange(n), np.arange(n))
    sign = (-1.0) ** np.arange(n)
    M = np.moveaxis(values, 0, -1)[..., idx]
    return M * sign


def build_K_S(kernel, order_per_block=None, tau=0.0) -> np.ndarray:
    """Evaluate the multi-output derivative covariance at ``tau``.

    ``kernel`` may be a single ``ExpPolyForm`` (one block of size
    ``order_per_block``), a ``HidaMaternSpec`` or a ``MixtureSpec``.  For
    mixtures the result is block diagonal with ``c_i K^S_i``; oscillatory
    components use the complex kernel and make the result complex.
    """
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be non-negative")
    if isinstance(kernel, ExpPolyForm):
        if order_per_block is None:
            raise ValueError("order_per_block is required for a bare ExpPolyForm")
        n = int(order_per_block)
        if 2 * (n - 1) > kernel.smoothness:
            hint = ""
            if not kernel.complex_valued and kernel.oscillatory:
                hint = "; oscillatory kernels need the complex form"
            raise ValueError(
                f"a block of size {n} needs derivatives up to order {2 * (n - 1)} "
                f"but the kernel is only {kernel.smoothness} times differentiable{hint}"
            )
        vals = [kernel.derivative(m)(tau) for m in range(2 * n - 1)]
        return derivative_cov(vals, n)
    if isinstance(kernel, HidaMaternSpec):
        kernel = MixtureSpec.single(kernel)
    orders = order_per_block or [s.p + 1 for s in kernel.specs]
    mats = []
    for (c, s), n in zip(kernel.components, orders):
        form = to_exp_poly(s, complex_valued=s.oscillatory).scaled(c)
        mats.append(build_K_S(form, n, tau))
    return linalg.block_diag(*mats)


def correlation_transform(raw_K0: np.ndarray):
    """Return ``(C, C K0 C^H)`` with ``C_ii = 1 / sqrt(K0_ii)``."""
    raw_K0 = np.asarray(raw_K0)
    d = np.diagonal(raw_K0)
    if np.any(np.abs(d.imag) > 1e-12 * np.abs(d.real)) or np.any(d.real <= 0):
        raise ValueError("K^S(0) needs a strictly positive real diagonal")
    c = 1.0 / np.sqrt(d.real)
    C = np.diag(c)
    out = _herm(c[:, None] * raw_K0 * c[None, :])
    np.fill_diagonal(out, 1.0)
    return C, out


def _spd_inverse(M: np.ndarray) -> np.ndarray:
    try:
        cf = linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"numerically singular block (size {len(M)})") from exc
    inv = linalg.cho_solve(cf, np.eye(len(M)), check_finite=False)
    return _herm(inv)


def structured_inverse_K0(K0: np.ndarray, b_is_zero: bool) -> np.ndarray:
    """Invert ``K^S(0)`` using its parity structure.

    Real (``b = 0``) blocks vanish wherever ``i + j`` is odd, so permuting
    even indices before odd ones splits the matrix into two blocks that are
    inverted separately.  Complex blocks are inverted densely; their
    entries at odd ``i + j`` are purely imaginary and those at even
    ``i + j`` purely real, which the result is re-masked to respect.
    """
    K0 = np.asarray(K0)
    n = len(K0)
    if b_is_zero:
        perm = np.r_[np.arange(0, n, 2), np.arange(1, n, 2)]
        ne = (n + 1) // 2
        Kp = K0.real[np.ix_(perm, perm)]
        inv_p = linalg.block_diag(_spd_inverse(Kp[:ne, :ne]), _spd_inverse(Kp[ne:, ne:])) \
            if n > 1 else _spd_inverse(Kp)
        out = np.empty_like(inv_p)
        out[np.ix_(perm, perm)] = inv_p
        return out
    if np.linalg.cond(K0) * np.finfo(float).eps > 1e-2:
        raise np.linalg.LinAlgError("numerically singular complex K^S(0)")
    inv = np.linalg.inv(K0)
    odd = np.add.outer(np.arange(n), np.arange(n)) % 2 == 1
    return np.where(odd, 1j * inv.imag, inv.real + 0j)


def realify(M: np.ndarray) -> np.ndarray:
    """Real embedding ``[[Re M, -Im M], [Im M, Re M]]`` (batched)."""
    re, im = M.real, M.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


class Block:
    """One mixture component in correlation-transformed coordinates.

    ``basis`` is ``"real"`` for ``b = 0``; oscillatory components are either
    ``"complex"`` (the derivative state of the complex kernel
    ``exp(jb tau) k(tau; a, 0)``) or ``"demodulated"``, the same state after
    removing the ``(jb)^k`` binomial mixing of derivatives, whose covariance
    is ``exp(jb tau) K_w(tau)`` with ``K_w`` the non-oscillatory block.
    Both complex bases describe the same process; the demodulated one stays
    well conditioned when ``a << b``.
    """

    def __init__(self, spec: HidaMaternSpec, weight: float = 1.0, basis: str = "auto"):
        if weight <= 0:
            raise ValueError("block weight must be > 0")
        if basis == "auto":
            basis = "real" if spec.b == 0 else "complex"
        if basis not in ("real", "complex", "demodulated"):
            raise ValueError(f"unknown basis {basis!r}")
        if basis == "real" and spec.b != 0:
            raise ValueError("oscillatory components need a complex basis")
        self.spec = spec
        self.weight = float(weight)
        self.basis = basis
        self.dim = spec.p + 1
        self.is_complex = basis != "real"
        self.real_dim = 2 * self.dim if self.is_complex else self.dim

        if basis == "real":
            form = to_exp_poly(spec)
        elif basis == "complex":
            form = to_exp_poly(spec, complex_valued=True)
        else:
            form = to_exp_poly(HidaMaternSpec(spec.sigma2, spec.a, 0.0, spec.p))
        form = form.scaled(self.weight)
        self._forms = [form.derivative(m) for m in range(2 * self.dim)]

        C, self.K0 = correlation_transform(self.raw_K(0.0))
        self.c = np.diag(C).copy()
        self.K0_inv = structured_inverse_K0(self.K0, b_is_zero=basis != "complex")
        self.h = np.zeros(self.dim)
        self.h[0] = 1.0 / self.c[0]

    def __repr__(self):
        return f"Block({self.spec!r}, weight={self.weight}, basis={self.basis!r})"

    def _derivs(self, tau, start: int = 0) -> np.ndarray:
        n = self.dim
        return np.array([self._forms[start + m](tau) for m in range(2 * n - 1)])

    def raw_K(self, tau) -> np.ndarray:
        """Untransformed ``K^S(tau)``; ``tau`` may be an array (leading axes)."""
        tau = np.asarray(tau, dtype=float)
        K = derivative_cov(self._derivs(tau), self.dim)
        if self.basis == "demodulated":
            K = K * np.exp(1j * self.spec.b * tau)[..., None, None]
        return K

    def K(self, tau) -> np.ndarray:
        return self.c[:, None] * self.raw_K(tau) * self.c[None, :]

    def dK0(self) -> np.ndarray:
        """Right derivative of the transformed ``K^S`` at zero."""
        raw = derivative_cov(self._derivs(0.0, start=1), self.dim)
        if self.basis == "demodulated":
            raw = raw + 1j * self.spec.b * self.raw_K(0.0).real
        return self.c[:, None] * raw * self.c[None, :]

    def transition(self, tau):
        """Native ``(A, Q)``, batched over ``tau``; zero gaps give ``(I, 0)``."""
        tau = np.asarray(tau, dtype=float)
        K = self.K(tau)
        A = K @ self.K0_inv
        Q = _herm(self.K0 - A @ np.swapaxes(K, -1, -2).conj())
        zero = tau == 0
        if np.any(zero):
            A = np.array(A, copy=True)
            Q = np.array(Q, copy=True)
            A[zero] = np.eye(self.dim)
            Q[zero] = 0.0
        if not self.is_complex:
            A, Q = A.real, Q.real
        return A, Q

    def embed(self, M: np.ndarray) -> np.ndarray:
        return realify(M) if self.is_complex else M.real


def _complex_block(spec: HidaMaternSpec, weight: float, basis: str) -> Block:
    if basis != "auto":
        return Block(spec, weight, basis)
    blk = Block(spec, weight, "complex") if _derivative_basis_ok(spec) else None
    if blk is None:
        log.info("derivative basis ill conditioned for %s; using demodulated basis", spec)
        blk = Block(spec, weight, "demodulated")
    return blk


def _derivative_basis_ok(spec: HidaMaternSpec) -> bool:
    raw = to_exp_poly(spec, complex_valued=True)
    K0 = build_K_S(raw, spec.p + 1, 0.0)
    _, Kt = correlation_transform(K0)
    return np.linalg.cond(Kt) < COND_LIMIT


class StateSpaceModel:
    """Block-diagonal state-space model of a Hida-Matern mixture.

    Native quantities (``transition``, ``K_S``, ``P_inf``) keep complex
    blocks complex; ``discretize``, ``P0`` and ``H`` are the real embedding
    consumed by the filter.  All of them are in correlation-transformed
    coordinates; ``H`` maps back to the observed function.
    """

    def __init__(self, blocks, obs_noise: float):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("model needs at least one block")
        if not obs_noise > 0:
            raise ValueError("observation noise variance must be > 0")
        self.blocks = blocks
        self.obs_noise = float(obs_noise)
        self.dim = sum(b.dim for b in blocks)
        self.state_dim = sum(b.real_dim for b in blocks)
        self.offsets = np.cumsum([0] + [b.dim for b in blocks])
        self.real_offsets = np.cumsum([0] + [b.real_dim for b in blocks])
        self.is_complex = any(b.is_complex for b in blocks)

        self.C = np.diag(np.concatenate([b.c for b in blocks]))
        self.P_inf = self._native_diag([b.K0 for b in blocks])
        self.K0_inv = self._native_diag([b.K0_inv for b in blocks])
        self.h = np.concatenate([b.h for b in blocks])

        self.P0 = linalg.block_diag(*[b.embed(b.K0) for b in blocks])
        H = np.zeros((1, self.state_dim))
        for b, off in zip(blocks, self.real_offsets[:-1]):
            H[0, off] = b.h[0]
        self.H = H
        self.R = np.array([[self.obs_noise]])

    @classmethod
    def from_spec(cls, spec: HidaMaternSpec, obs_noise: float, basis: str = "auto"):
        return assemble_mixture(MixtureSpec.single(spec), obs_noise, basis)

    @property
    def support(self):
        """Non-zero observation coordinates (real embedding) and weights."""
        idx = np.flatnonzero(self.H[0])
        return idx, self.H[0, idx]

    @property
    def prior_variance(self) -> float:
        return float(self.H[0] @ self.P0 @ self.H[0])

    def _native_diag(self, mats):
        out = linalg.block_diag(*mats)
        return out if self.is_complex else out.real

    def K_S(self, tau, transformed: bool = True) -> np.ndarray:
        if transformed:
            return self._native_diag([b.K(tau) for b in self.blocks])
        return self._native_diag([b.raw_K(tau) for b in self.blocks])

    def transition(self, delta: float) -> TransitionPair:
        if delta < 0:
            raise ValueError("delta must be >= 0")
        if delta == 0:
            z = np.zeros((self.dim, self.dim), complex if self.is_complex else float)
            return TransitionPair(np.eye(self.dim) + z, z)
        pairs = [b.transition(delta) for b in self.blocks]
        return TransitionPair(
            self._native_diag([p[0] for p in pairs]),
            self._native_diag([p[1] for p in pairs]),
        )

    def discretize(self, deltas):
        """Real-embedded ``(A, Q)`` for an array of gaps, shape ``(T, n, n)``."""
        deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
        if np.any(deltas < 0):
            raise ValueError("gaps must be >= 0")
        T, n = len(deltas), self.state_dim
        A = np.zeros((T, n, n))
        Q = np.zeros((T, n, n))
        for b, lo, hi in zip(self.blocks, self.real_offsets[:-1], self.real_offsets[1:]):
            Ab, Qb = b.transition(deltas)
            A[:, lo:hi, lo:hi] = b.embed(Ab)
            Q[:, lo:hi, lo:hi] = b.embed(Qb)
        return A, Q

    def component_H(self, i: int) -> np.ndarray:
        """Observation row restricted to block ``i``."""
        H = np.zeros((1, self.state_dim))
        H[0, self.real_offsets[i]] = self.H[0, self.real_offsets[i]]
        return H

    def embed(self, M: np.ndarray) -> np.ndarray:
        """Real embedding of a block-diagonal native matrix."""
        out = np.zeros((self.state_dim, self.state_dim))
        for b, o, ro in zip(self.blocks, self.offsets, self.real_offsets):
            out[ro:ro + b.real_dim, ro:ro + b.real_dim] = b.embed(M[o:o + b.dim, o:o + b.dim])
        return out


def assemble_mixture(mix: MixtureSpec, obs_noise: float, basis: str = "auto") -> StateSpaceModel:
    """Block-diagonal model for a mixture; zero-weight components are dropped.

    ``basis`` applies to oscillatory components: ``"auto"`` uses derivative
    coordinates unless their transformed ``K^S(0)`` is numerically singular.
    """
    blocks = []
    for c, s in mix.components:
        if c == 0:
            log.debug("dropping zero-weight component %s", s)
            continue
        if s.b == 0:
            blocks.append(Block(s, c, "real"))
        else:
            blocks.append(_complex_block(s, c, basis))
    return StateSpaceModel(blocks, obs_noise)


def complex_block_calibration(spec: HidaMaternSpec, basis: str = "auto",
                              rtol: float = 1e-8) -> float:
    """Scale of the circular state covariance relative to the complex block.

    With ``f = Re(z_0)`` and ``z`` circular with covariance ``s K_z``, the
    covariance of ``f`` is ``(s / 2) Re k_z``; ``s = 2`` reproduces the
    Hida-Matern kernel.  The claim is checked against the kernel itself on
    a lag grid and any mismatch raises ``CalibrationError``.
    """
    if spec.b <= 0:
        raise ValueError("calibration applies to oscillatory components only")
    blk = _complex_block(spec, 1.0, basis)
    taus = np.linspace(0.0, 6.0 / spec.a, 25)
    emb = blk.embed(blk.K(taus))  # covariance of [Re z; Im z] for s = 2
    implied = emb[:, 0, 0] * blk.h[0] ** 2
    target = eval_kernel(spec, taus)
    err = np.max(np.abs(implied - target))
    if err > rtol * spec.sigma2:
        raise CalibrationError(f"complex block calibration mismatch {err:.3e} for {spec}")
    return CIRCULAR_SCALE


def transition(model: StateSpaceModel, delta: float) -> TransitionPair:
    return model.transition(delta)


def sde_dynamics(model: StateSpaceModel) -> np.ndarray:
    """Generator ``F`` with ``exp(F tau) = A(tau)``, from the analytic
    right derivative ``dK^S(0+) K^S(0)^{-1}`` (native, transformed)."""
    return model._native_diag([b.dK0() @ b.K0_inv for b in model.blocks])


class LinearGaussianModel:
    """A model seen through an invertible change of state basis ``g = X f``.

    ``X`` acts on the real-embedded state of ``base``.  ``H`` is the new
    observation matrix (``D x n``) and ``R`` the ``D x D`` noise covariance.
    """

    def __init__(self, base, X, H, R):
        X = np.asarray(X, dtype=float)
        n = base.state_dim
        if X.shape != (n, n):
            raise ValueError(f"X must be {n}x{n}, got {X.shape}")
        if np.linalg.cond(X) > 1e12:
            raise np.linalg.LinAlgError("X is singular")
        self.base = base
        self.X = X
        self.X_inv = np.linalg.inv(X)
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        if self.H.shape[1] != n:
            raise ValueError("H must have one column per state coordinate")
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.state_dim = n
        self.P0 = _herm(X @ base.P0 @ X.T)

    @property
    def obs_noise(self) -> float:
        return float(self.R[0, 0])

    @property
    def support(self):
        if self.H.shape[0] != 1:
            return None
        idx = np.flatnonzero(self.H[0])
        return idx, self.H[0, idx]

    def discretize(self, deltas):
        A, Q = self.base.discretize(deltas)
        return self.X @ A @ self.X_inv, _herm(self.X @ Q @ self.X.T)

    def output_cov(self, tau: float) -> np.ndarray:
        """``H X K(tau) X^T H^T`` for ``tau >= 0``."""
        A, _ = self.discretize([tau])
        return self.H @ A[0] @ self.P0 @ self.H.T


def transform_linear(model, X, H_obs, obs_noise=None) -> LinearGaussianModel:
    if obs_noise is None:
        obs_noise = model.R
    H_obs = np.atleast_2d(H_obs)
    R = np.atleast_2d(obs_noise)
    if R.shape == (1, 1) and H_obs.shape[0] > 1:
        R = R[0, 0] * np.eye(H_obs.shape[0])
    return LinearGaussianModel(model, X, H_obs, R)


def _partition(M, m):
    return M[:m, :m], M[:m, m:], M[m:, :m], M[m:, m:]


def marginalize_naive(model: StateSpaceModel, delta: float, keep_dim: int):
    """One-step marginalisation of the trailing state coordinates.

    Returns ``(Lambda, Sigma)`` from
    ``Lambda = A00 + A01 K10(0) K00(0)^{-1}`` and
    ``Sigma = Q00 + A01 (K11 - K10 K00^{-1} K01) A01^H``.
    """
    if not 0 < keep_dim <= model.dim:
        raise ValueError(f"keep_dim must be in [1, {model.dim}]")
    pair = model.transition(delta)
    if keep_dim == model.dim:
        return pair.A, pair.Q
    K0 = model.P_inf
    A00, A01, _, _ = _partition(pair.A, keep_dim)
    Q00 = pair.Q[:keep_dim, :keep_dim]
    K00, K01, K10, K11 = _partition(K0, keep_dim)
    K00_inv = np.linalg.inv(K00)
    Lam = A00 + A01 @ K10 @ K00_inv
    schur = K11 - K10 @ K00_inv @ K01
    Sig = _herm(Q00 + A01 @ schur @ A01.conj().T)
    return Lam, Sig


def naive_block_formula(model: StateSpaceModel, delta: float, keep_dim: int):
    """``(K00(d) K00(0)^{-1}, K00(0) - K00(d) K00(0)^{-1} K00(d)^H)``."""
    if not 0 < keep_dim <= model.dim:
        raise ValueError(f"keep_dim must be in [1, {model.dim}]")
    if delta == 0:
        return np.eye(keep_dim), np.zeros((keep_dim, keep_dim))
    K0 = model.P_inf[:keep_dim, :keep_dim]
    Kd = model.K_S(delta)[:keep_dim, :keep_dim]
    Lam = np.linalg.solve(K0.T, Kd.T).T
    Sig = _herm(K0 - Lam @ Kd.conj().T)
    return Lam, Sig


def conditioning_diagnostics(spec: HidaMaternSpec, tau: float) -> dict:
    """Matrices ``K(tau)``, ``A(tau)``, ``Q(tau)`` before and after the
    correlation transform, for a single component."""
    basis = "real" if spec.b == 0 else "complex"
    blk = Block(spec, 1.0, basis)
    K0_raw = blk.raw_K(0.0)
    K_raw = blk.raw_K(tau)
    out = {"K_raw": K_raw, "K_corr": blk.K0.copy() if tau == 0 else blk.K(tau)}
    if tau == 0:
        eye = np.eye(blk.dim)
        out.update(A_raw=eye, A_corr=eye.copy(),
                   Q_raw=np.zeros_like(eye), Q_corr=np.zeros_like(eye))
    else:
        A_raw = np.linalg.solve(K0_raw.T, K_raw.T).T
        out["A_raw"] = A_raw
        out["Q_raw"] = _herm(K0_raw - A_raw @ K_raw.conj().T)
        A, Q = blk.transition(tau)
        out["A_corr"], out["Q_corr"] = A, Q
    if not blk.is_complex:
        out = {k: v.real for k, v in out.items()}
    return out
