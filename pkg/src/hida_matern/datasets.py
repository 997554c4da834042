"""Synthetic data generators for the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import HidaMaternSpec, MixtureSpec

__all__ = [
    "SMToyConfig",
    "sm_toy",
    "sm_toy_prior",
    "MaunaLoaSynthetic",
    "mauna_loa_synthetic",
    "mauna_loa_kernel",
]


@dataclass(frozen=True)
class SMToyConfig:
    """Sum of two spectral-mixture terms ``c exp(-tau^2 / 2l^2) cos(omega tau)``."""

    c: tuple[float, float] = (1.5**2, 1.5**2)
    l: tuple[float, float] = (2.0, 2.0)
    omega: tuple[float, float] = (2 * math.pi * 0.01, 2 * math.pi * 0.05)
    spacing: float = 0.05
    obs_noise: float = 0.1
    n_features: int = 2000


def sm_toy(M: int, seed: int = 0, cfg: SMToyConfig = SMToyConfig()):
    """Uniformly spaced samples of the toy process plus Gaussian noise.

    Draws come from random Fourier features (``n_features`` per term), so
    the cost is linear in ``M``.  Returns ``(t, y)``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    t = cfg.spacing * np.arange(M)
    f = np.zeros(M)
    J = cfg.n_features
    for c, l, w0 in zip(cfg.c, cfg.l, cfg.omega):
        freqs = w0 + rng.standard_normal(J) / l
        phase = rng.uniform(0.0, 2 * math.pi, J)
        amp = math.sqrt(2.0 * c / J)
        for lo in range(0, M, 4096):
            tt = t[lo:lo + 4096]
            f[lo:lo + 4096] += amp * np.cos(np.outer(tt, freqs) + phase).sum(axis=1)
    y = f + math.sqrt(cfg.obs_noise) * rng.standard_normal(M)
    return t, y


def sm_toy_prior(cfg: SMToyConfig = SMToyConfig(), p: int = 2) -> MixtureSpec:
    """Hida-Matern stand-in for the toy kernel: one order-``p`` term per
    spectral-mixture term, rate ``sqrt(2p + 1) / l`` and centre ``omega``."""
    return MixtureSpec(tuple(
        (c, HidaMaternSpec(1.0, math.sqrt(2 * p + 1) / l, w0, p))
        for c, l, w0 in zip(cfg.c, cfg.l, cfg.omega)
    ))


def mauna_loa_kernel() -> MixtureSpec:
    """Seasonal plus trend prior with the published hyperparameters."""
    return MixtureSpec((
        (0.05**2, HidaMaternSpec(1.0, 1 / 25, 2 * math.pi, 3)),
        (2.3**2, HidaMaternSpec(1.0, 1 / 100, 0.0, 3)),
    ))


@dataclass(frozen=True, eq=False)
class MaunaLoaSynthetic:
    t_train: np.ndarray
    y_train: np.ndarray
    t_test: np.ndarray
    y_test: np.ndarray
    seasonal_test: np.ndarray
    offset: float
    scale: float


def mauna_loa_synthetic(seed: int = 0, start: float = 1974.0, split: float = 2004.0,
                        stop: float = 2020.0, noise_ppm: float = 0.3) -> MaunaLoaSynthetic:
    """Monthly CO2-like series: quadratic trend, two-harmonic annual cycle
    and white noise, standardised with the training mean and std."""
    rng = np.random.Generator(np.random.PCG64(seed))
    t = start + np.arange(int(round((stop - start) * 12))) / 12.0
    u = t - start
    trend = 330.0 + 1.2 * u + 0.012 * u**2
    season = 2.8 * np.sin(2 * math.pi * t) + 0.7 * np.cos(4 * math.pi * t + 0.5)
    y = trend + season + noise_ppm * rng.standard_normal(len(t))
    tr = t < split
    offset = float(y[tr].mean())
    scale = float(y[tr].std())
    z = (y - offset) / scale
    return MaunaLoaSynthetic(
        t_train=t[tr], y_train=z[tr], t_test=t[~tr], y_test=z[~tr],
        seasonal_test=season[~tr] / scale, offset=offset, scale=scale,
    )
