"""Hida-Matern kernels in closed form.

An elementary kernel is a cosine-modulated half-integer Matern,

    k(tau) = sigma2 * cos(b * tau) * m_p(tau; a),

where ``m_p`` is the unit-variance Matern of order nu = p + 1/2 whose
exponential decay rate is ``a`` (so the PSD has poles at +-b +- ja).
Every kernel here is also available as an exponential-polynomial form,
which is closed under differentiation and is what the state-space
construction consumes.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

__all__ = [
    "HidaMaternSpec",
    "ExpPolyForm",
    "MixtureSpec",
    "CanonicalFilter",
    "QuadConfig",
    "QuadratureError",
    "eval_kernel",
    "eval_psd",
    "to_exp_poly",
    "differentiate",
    "complex_kernel",
    "mixture_eval",
    "mixture_psd",
    "covariance_from_filter",
    "calibrate_filter",
    "periodic_to_mixture",
    "mixture_to_json",
    "mixture_from_json",
    "mixture_to_dict",
    "mixture_from_dict",
    "kernel_function",
]


@dataclass(frozen=True)
class HidaMaternSpec:
    """Hyperparameters of one elementary Hida-Matern kernel.

    Parameters
    ----------
    sigma2 : float
        Variance, ``k(0) = sigma2``.
    a : float
        Decay rate (inverse time), strictly positive.
    b : float
        Angular frequency of the cosine modulation, non-negative.
    p : int
        Smoothness order; the Matern order is ``p + 1/2``.
    """

    sigma2: float = 1.0
    a: float = 1.0
    b: float = 0.0
    p: int = 0

    def __post_init__(self):
        for name in ("sigma2", "a", "b"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.a <= 0:
            raise ValueError(f"a must be > 0, got {self.a}")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")
        if int(self.p) != self.p or self.p < 0:
            raise ValueError(f"p must be a non-negative integer, got {self.p}")
        object.__setattr__(self, "p", int(self.p))

    @property
    def oscillatory(self) -> bool:
        return self.b > 0


@lru_cache(maxsize=None)
def _matern_weights(p: int) -> tuple[float, ...]:
    # weight of (2 a tau)^k in the unit-variance half-integer Matern
    out = []
    for k in range(p + 1):
        w = Fraction(
            math.factorial(p) * math.factorial(2 * p - k),
            math.factorial(2 * p) * math.factorial(k) * math.factorial(p - k),
        )
        out.append(float(w))
    return tuple(out)


def _matern_poly_coeffs(p: int, a: float) -> np.ndarray:
    """Ascending coefficients of the polynomial multiplying ``exp(-a tau)``."""
    w = np.array(_matern_weights(p))
    return w * (2.0 * a) ** np.arange(p + 1)


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ValueError("tau must be finite")
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    return tau


def eval_kernel(spec: HidaMaternSpec, tau):
    """Evaluate ``sigma2 cos(b tau) m_p(tau; a)`` for ``tau >= 0``."""
    tau = _check_tau(tau)
    poly = np.polynomial.polynomial.polyval(tau, _matern_poly_coeffs(spec.p, spec.a))
    out = spec.sigma2 * np.cos(spec.b * tau) * np.exp(-spec.a * tau) * poly
    return out if out.ndim else float(out)


def _matern_psd_constant(p: int, a: float) -> float:
    # 2 pi / int (w^2 + a^2)^-(p+1) dw, in log space to survive large p
    logc = (
        math.log(2.0 * math.sqrt(math.pi))
        + special.gammaln(p + 1)
        - special.gammaln(p + 0.5)
        + (2 * p + 1) * math.log(a)
    )
    return math.exp(logc)


def eval_psd(spec: HidaMaternSpec, omega):
    """Two-lobe rational PSD, normalised so ``(1/2pi) int S = sigma2``."""
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("omega must be finite")
    a, b, p = spec.a, spec.b, spec.p
    c = _matern_psd_constant(p, a)
    lobe = lambda w: c / (w**2 + a**2) ** (p + 1)  # noqa: E731
    out = 0.5 * spec.sigma2 * (lobe(omega - b) + lobe(omega + b))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class ExpPolyForm:
    """Sum of polynomial-times-exponential modes.

    The represented function is ``sum_m P_m(tau) exp(-mu_m tau)`` for
    ``tau >= 0``; when ``complex_valued`` is False only its real part is
    returned.  ``smoothness`` is the highest derivative order that is
    continuous through the origin (for a Hida-Matern of order p it is
    ``2p``); derivatives at zero are always right limits.
    """

    mus: tuple[complex, ...]
    coeffs: tuple[np.ndarray, ...]
    complex_valued: bool = False
    smoothness: int = 0

    def __post_init__(self):
        if len(self.mus) != len(self.coeffs):
            raise ValueError("one coefficient vector per mode is required")
        if any(complex(mu).real <= 0 for mu in self.mus):
            raise ValueError("every mode needs Re(mu) > 0")
        object.__setattr__(
            self, "coeffs", tuple(np.asarray(c, dtype=complex) for c in self.coeffs)
        )
        object.__setattr__(self, "mus", tuple(complex(mu) for mu in self.mus))

    def __call__(self, tau):
        tau = _check_tau(tau)
        out = np.zeros(tau.shape, dtype=complex)
        for mu, c in zip(self.mus, self.coeffs):
            out += np.polynomial.polynomial.polyval(tau, c) * np.exp(-mu * tau)
        if not self.complex_valued:
            out = out.real
        return out if out.ndim else out[()]

    @property
    def degree(self) -> int:
        return max((len(c) - 1 for c in self.coeffs), default=0)

    def derivative(self, n: int = 1) -> "ExpPolyForm":
        if n < 0:
            raise ValueError("derivative order must be >= 0")
        coeffs = list(self.coeffs)
        for _ in range(n):
            new = []
            for mu, c in zip(self.mus, coeffs):
                dc = np.polynomial.polynomial.polyder(c) if len(c) > 1 else np.zeros(1)
                d = -mu * c
                d[: len(dc)] += dc
                new.append(d)
            coeffs = new
        return ExpPolyForm(
            self.mus,
            tuple(coeffs),
            self.complex_valued,
            max(self.smoothness - n, 0),
        )

    def scaled(self, factor) -> "ExpPolyForm":
        return ExpPolyForm(
            self.mus,
            tuple(factor * c for c in self.coeffs),
            self.complex_valued,
            self.smoothness,
        )

    def __add__(self, other: "ExpPolyForm") -> "ExpPolyForm":
        if self.complex_valued != other.complex_valued:
            raise ValueError("cannot add real-valued and complex-valued forms")
        return ExpPolyForm(
            self.mus + other.mus,
            self.coeffs + other.coeffs,
            self.complex_valued,
            min(self.smoothness, other.smoothness),
        )

    @property
    def oscillatory(self) -> bool:
        return any(abs(mu.imag) > 0 for mu in self.mus)


def to_exp_poly(spec: HidaMaternSpec, complex_valued: bool = False) -> ExpPolyForm:
    """Single-mode form ``sigma2 P(tau) exp(-(a - jb) tau)``.

    The real part is the Hida-Matern kernel; with ``complex_valued=True``
    the form is the complex kernel ``exp(jb tau) sigma2 m_p(tau; a)``.
    """
    coeffs = spec.sigma2 * _matern_poly_coeffs(spec.p, spec.a)
    return ExpPolyForm(
        (complex(spec.a, -spec.b),), (coeffs,), complex_valued, 2 * spec.p
    )


def differentiate(form: ExpPolyForm, n: int) -> ExpPolyForm:
    return form.derivative(n)


def complex_kernel(spec: HidaMaternSpec, tau):
    tau = _check_tau(tau)
    out = spec.sigma2 * np.exp(1j * spec.b * tau) * (eval_kernel(
        HidaMaternSpec(1.0, spec.a, 0.0, spec.p), tau))
    return out if np.ndim(out) else complex(out)


@dataclass(frozen=True)
class MixtureSpec:
    """Non-negative combination ``sum_i c_i k_i`` of elementary kernels."""

    components: tuple[tuple[float, HidaMaternSpec], ...]

    def __post_init__(self):
        comps = tuple((float(c), s) for c, s in self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if any(c < 0 or not np.isfinite(c) for c, _ in comps):
            raise ValueError("mixture weights must be finite and >= 0")
        if not any(c > 0 for c, _ in comps):
            raise ValueError("at least one mixture weight must be > 0")
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, spec: HidaMaternSpec, weight: float = 1.0) -> "MixtureSpec":
        return cls(((weight, spec),))

    @property
    def weights(self) -> np.ndarray:
        return np.array([c for c, _ in self.components])

    @property
    def specs(self) -> tuple[HidaMaternSpec, ...]:
        return tuple(s for _, s in self.components)

    @property
    def order(self) -> int:
        """Total Markov order: sum of the block sizes ``p_i + 1``."""
        return sum(s.p + 1 for _, s in self.components)

    @property
    def variance(self) -> float:
        return float(sum(c * s.sigma2 for c, s in self.components))

    def to_exp_poly(self) -> ExpPolyForm:
        form = None
        for c, s in self.components:
            f = to_exp_poly(s).scaled(c)
            form = f if form is None else form + f
        return form

    def __call__(self, tau):
        return mixture_eval(self, tau)


def mixture_eval(mix: MixtureSpec, tau):
    tau = _check_tau(tau)
    out = sum(c * np.asarray(eval_kernel(s, tau)) for c, s in mix.components)
    return out if np.ndim(out) else float(out)


def mixture_psd(mix: MixtureSpec, omega):
    return sum(c * np.asarray(eval_psd(s, omega)) for c, s in mix.components)


# -- canonical filters ------------------------------------------------------


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadConfig:
    epsabs: float = 1e-13
    epsrel: float = 1e-11
    limit: int = 400


@dataclass(frozen=True)
class CanonicalFilter:
    """``F(u) = sum_k c_k u^{p_k} exp(-mu_k u)`` for ``u >= 0``."""

    terms: tuple[tuple[complex, int, complex], ...]

    def __post_init__(self):
        terms = tuple((complex(c), int(p), complex(mu)) for c, p, mu in self.terms)
        if not terms:
            raise ValueError("a filter needs at least one term")
        for _, p, mu in terms:
            if p < 0:
                raise ValueError("filter powers must be >= 0")
            if mu.real <= 0:
                raise ValueError("filter rates need Re(mu) > 0 for stability")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_spec(cls, spec: HidaMaternSpec, c: complex = 1.0) -> "CanonicalFilter":
        return cls(((c, spec.p, complex(spec.a, spec.b)),))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return sum(c * u**p * np.exp(-mu * u) for c, p, mu in self.terms)

    @property
    def min_rate(self) -> float:
        return min(mu.real for _, _, mu in self.terms)


def covariance_from_filter(
    filt: CanonicalFilter, tau: float, quad_cfg: QuadConfig = QuadConfig()
) -> float:
    """Stationary covariance ``int_tau^inf F(u) F*(u - tau) du`` (real part).

    The integral is split at a few multiples of the slowest decay time so
    the adaptive rule sees the polynomial peak; the tail beyond that is
    integrated on the semi-infinite interval.
    """
    tau = float(_check_tau(tau))
    rate = filt.min_rate
    pmax = max(p for _, p, _ in filt.terms)
    scale = (pmax + 1.0) / rate
    breaks = tau + scale * np.array([0.0, 1.0, 4.0, 16.0, 64.0])

    def integrand(u):
        return (filt(u) * np.conj(filt(u - tau))).real

    total = 0.0
    pieces = list(zip(breaks[:-1], breaks[1:])) + [(breaks[-1], np.inf)]
    for lo, hi in pieces:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(
                    integrand, lo, hi,
                    epsabs=quad_cfg.epsabs, epsrel=quad_cfg.epsrel,
                    limit=quad_cfg.limit,
                )
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(
                    f"quadrature on [{lo:g}, {hi:g}] did not converge "
                    f"(slowest rate {rate:g}): {exc}"
                ) from exc
        total += val
    return total


def calibrate_filter(filt: CanonicalFilter, variance: float = 1.0,
                     quad_cfg: QuadConfig = QuadConfig()) -> CanonicalFilter:
    """Rescale the filter so the process has the requested variance."""
    v0 = covariance_from_filter(filt, 0.0, quad_cfg)
    s = math.sqrt(variance / v0)
    return CanonicalFilter(tuple((s * c, p, mu) for c, p, mu in filt.terms))


# -- periodic kernel expansion ---------------------------------------------


def periodic_to_mixture(
    sigma2: float, l: float, omega0: float, L: int, p: int = 1,
    a_min: float | None = None,
) -> MixtureSpec:
    """Truncated cosine-series expansion of the periodic kernel.

    ``sigma2 exp(-2 sin^2(omega0 tau / 2) / l^2)`` equals
    ``sigma2 exp(-1/l^2) sum_q l^{-2q} cos^q(omega0 tau) / q!``; each power
    of the cosine splits into harmonics ``omega0 |q - 2v|``.  Harmonics are
    realised as Hida-Matern terms with the decay rate floored at ``a_min``
    (default ``1e-4 * omega0``), and equal harmonics are merged.
    """
    if L < 0:
        raise ValueError("truncation order L must be >= 0")
    if sigma2 <= 0 or l <= 0 or omega0 <= 0:
        raise ValueError("sigma2, l and omega0 must be > 0")
    if a_min is None:
        a_min = 1e-4 * omega0
    weights: dict[int, float] = {}
    base = sigma2 * math.exp(-1.0 / l**2)
    for q in range(L + 1):
        scale = base * l ** (-2 * q) / (math.factorial(q) * 2**q)
        for v in range(q + 1):
            h = abs(q - 2 * v)
            weights[h] = weights.get(h, 0.0) + scale * math.comb(q, v)
    comps = tuple(
        (w, HidaMaternSpec(1.0, a_min, omega0 * h, p))
        for h, w in sorted(weights.items())
    )
    return MixtureSpec(comps)


# -- serialisation ----------------------------------------------------------


def mixture_to_dict(mix: MixtureSpec) -> dict:
    return {
        "components": [
            {"sigma2": s.sigma2, "a": s.a, "b": s.b, "p": s.p, "weight": c}
            for c, s in mix.components
        ]
    }


def mixture_from_dict(doc: dict) -> MixtureSpec:
    try:
        comps = doc["components"]
        return MixtureSpec(tuple(
            (
                float(c.get("weight", 1.0)),
                HidaMaternSpec(float(c.get("sigma2", 1.0)), float(c["a"]),
                               float(c.get("b", 0.0)), int(c["p"])),
            )
            for c in comps
        ))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed kernel document: {exc}") from exc


def mixture_to_json(mix: MixtureSpec) -> str:
    return json.dumps(mixture_to_dict(mix), indent=2)


def mixture_from_json(text: str) -> MixtureSpec:
    return mixture_from_dict(json.loads(text))


def kernel_function(mix: MixtureSpec | HidaMaternSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised stationary kernel of the signed lag, ``k(|tau|)``."""
    if isinstance(mix, HidaMaternSpec):
        mix = MixtureSpec.single(mix)
    return lambda tau: mixture_eval(mix, np.abs(np.asarray(tau, dtype=float)))
