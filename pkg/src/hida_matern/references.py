"""Stationary reference kernels used as approximation targets.

Each kernel is a frozen dataclass that evaluates ``k(tau)`` for
``tau >= 0`` and, where a closed form exists, its PSD ``S(omega)`` with
the convention ``k(tau) = (1/2pi) int S(omega) exp(j omega tau) d omega``.
Frequencies ``b`` of the Gabor, sinc and spectral-mixture kernels are in
cycles per unit time, i.e. they modulate with ``cos(2 pi b tau)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "SquaredExponential",
    "RationalQuadratic",
    "Gabor",
    "Sinc",
    "MaternHalfInteger",
    "SpectralMixture",
    "Periodic",
    "reference_eval",
    "reference_psd",
    "make_reference",
    "REFERENCE_NAMES",
]


def _positive(**kw):
    for k, v in kw.items():
        if not (v > 0 and np.isfinite(v)):
            raise ValueError(f"{k} must be > 0, got {v}")


def _se_psd(sigma2, l, omega):
    return sigma2 * math.sqrt(2 * math.pi) * l * np.exp(-0.5 * (l * omega) ** 2)


@dataclass(frozen=True)
class SquaredExponential:
    sigma2: float = 1.0
    l: float = 1.0

    def __post_init__(self):
        _positive(sigma2=self.sigma2, l=self.l)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.sigma2 * np.exp(-0.5 * tau**2 / self.l**2)

    def psd(self, omega):
        return _se_psd(self.sigma2, self.l, np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class RationalQuadratic:
    alpha: float = 1.0
    l: float = 1.0

    def __post_init__(self):
        _positive(alpha=self.alpha, l=self.l)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (1.0 + tau**2 / (2 * self.alpha * self.l**2)) ** (-self.alpha)

    psd = None


@dataclass(frozen=True)
class Gabor:
    sigma2: float = 1.0
    l: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        _positive(sigma2=self.sigma2, l=self.l)
        if self.b < 0:
            raise ValueError("b must be >= 0")

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (self.sigma2 * np.cos(2 * math.pi * self.b * tau)
                * np.exp(-0.5 * tau**2 / self.l**2))

    def psd(self, omega):
        omega = np.asarray(omega, dtype=float)
        w0 = 2 * math.pi * self.b
        return 0.5 * (_se_psd(self.sigma2, self.l, omega - w0)
                      + _se_psd(self.sigma2, self.l, omega + w0))


@dataclass(frozen=True)
class Sinc:
    """``sigma2 sinc(delta tau) cos(2 pi b tau)`` with the normalised sinc."""

    sigma2: float = 1.0
    delta: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        _positive(sigma2=self.sigma2, delta=self.delta)
        if self.b < 0:
            raise ValueError("b must be >= 0")

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.sigma2 * np.sinc(self.delta * tau) * np.cos(2 * math.pi * self.b * tau)

    def psd(self, omega):
        omega = np.asarray(omega, dtype=float)
        w0 = 2 * math.pi * self.b
        box = lambda w: (np.abs(w) < math.pi * self.delta) / self.delta  # noqa: E731
        return 0.5 * self.sigma2 * (box(omega - w0) + box(omega + w0))


@dataclass(frozen=True)
class MaternHalfInteger:
    """Matern of order ``p + 1/2`` with length-scale ``l``."""

    sigma2: float = 1.0
    l: float = 1.0
    p: int = 1

    def __post_init__(self):
        _positive(sigma2=self.sigma2, l=self.l)
        if int(self.p) != self.p or self.p < 0:
            raise ValueError("p must be a non-negative integer")

    @property
    def rate(self) -> float:
        return math.sqrt(2 * self.p + 1) / self.l

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        p = self.p
        nu = p + 0.5
        x = math.sqrt(8 * nu) * tau / self.l
        pref = math.gamma(p + 1) / math.gamma(2 * p + 1)
        s = sum(
            math.factorial(p + i) / (math.factorial(i) * math.factorial(p - i)) * x ** (p - i)
            for i in range(p + 1)
        )
        return self.sigma2 * np.exp(-math.sqrt(2 * nu) * tau / self.l) * pref * s

    def psd(self, omega):
        omega = np.asarray(omega, dtype=float)
        p, a = self.p, self.rate
        logc = (math.log(2 * math.sqrt(math.pi)) + special.gammaln(p + 1)
                - special.gammaln(p + 0.5) + (2 * p + 1) * math.log(a))
        return self.sigma2 * math.exp(logc) / (omega**2 + a**2) ** (p + 1)


@dataclass(frozen=True)
class SpectralMixture:
    """Sum of Gabor terms, given as ``((sigma2, l, b), ...)``."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple(tuple(float(x) for x in c) for c in self.components)
        if not comps:
            raise ValueError("spectral mixture needs at least one component")
        object.__setattr__(self, "components", comps)
        for s, l, b in comps:
            Gabor(s, l, b)

    def __call__(self, tau):
        return sum(Gabor(*c)(tau) for c in self.components)

    def psd(self, omega):
        return sum(Gabor(*c).psd(omega) for c in self.components)


@dataclass(frozen=True)
class Periodic:
    """``sigma2 exp(-2 sin^2(omega0 tau / 2) / l^2)``; its spectrum is discrete."""

    sigma2: float = 1.0
    l: float = 1.0
    omega0: float = 2 * math.pi

    def __post_init__(self):
        _positive(sigma2=self.sigma2, l=self.l, omega0=self.omega0)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.sigma2 * np.exp(-2.0 * np.sin(0.5 * self.omega0 * tau) ** 2 / self.l**2)

    psd = None


def reference_eval(ref, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    out = ref(tau)
    return out if np.ndim(out) else float(out)


def reference_psd(ref, omega, tau_grid: np.ndarray | None = None):
    """Closed-form PSD when available, otherwise a cosine transform of ``ref``
    over ``tau_grid`` (trapezoid)."""
    omega = np.asarray(omega, dtype=float)
    if getattr(ref, "psd", None) is not None:
        return ref.psd(omega)
    if tau_grid is None:
        raise ValueError(f"{type(ref).__name__} has no closed-form PSD; pass tau_grid")
    k = ref(tau_grid)
    integrand = k[None, :] * np.cos(np.outer(omega, tau_grid))
    return 2.0 * np.trapezoid(integrand, tau_grid, axis=1)


REFERENCE_NAMES = (
    "se", "rq", "gabor", "sinc", "matern12", "matern32", "matern52",
    "matern", "sm", "periodic",
)


def make_reference(name: str, **params):
    """Build a reference kernel from a short name and keyword parameters."""
    name = name.lower()
    if name == "se":
        return SquaredExponential(**params)
    if name == "rq":
        return RationalQuadratic(**params)
    if name == "gabor":
        return Gabor(**params)
    if name == "sinc":
        return Sinc(**params)
    if name in ("matern12", "matern32", "matern52"):
        p = {"matern12": 0, "matern32": 1, "matern52": 2}[name]
        return MaternHalfInteger(p=p, **params)
    if name == "matern":
        return MaternHalfInteger(**params)
    if name == "sm":
        return SpectralMixture(tuple(tuple(c) for c in params["components"]))
    if name == "periodic":
        return Periodic(**params)
    raise KeyError(f"unknown reference kernel {name!r}; choose from {', '.join(REFERENCE_NAMES)}")
