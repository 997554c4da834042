import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hida_matern.kernels import HidaMaternSpec, kernel_function
from hida_matern.oracle import (
    MAX_DENSE,
    OracleError,
    avg_marginal_kld,
    condition_gaussian,
    exact_posterior,
    fd_derivative,
    gaussian_kld,
    gram,
)

OU = kernel_function(HidaMaternSpec(1.0, 0.7, 0.0, 0))


def test_interpolates_without_noise():
    t = np.array([0.0, 1.0, 2.5])
    y = np.array([0.3, -1.0, 0.4])
    post = exact_posterior(OU, t, y, 0.0)
    np.testing.assert_allclose(post.mean, y, atol=1e-8)
    np.testing.assert_allclose(post.variance, 0.0, atol=1e-8)


def test_two_point_ou_closed_form():
    # k(t-s) k(0)^{-1} y: conditioning on one exact point of an OU process
    a, s, t = 0.7, 0.0, 1.3
    post = exact_posterior(OU, [s], [2.0], 0.0, [t])
    rho = math.exp(-a * (t - s))
    assert post.mean[0] == pytest.approx(2.0 * rho, rel=1e-12)
    assert post.variance[0] == pytest.approx(1 - rho**2, rel=1e-10)
    # and with noise on two points, the hand-written 2x2 solve
    sig = 0.2
    t2 = np.array([0.0, 0.9])
    y2 = np.array([1.0, -0.5])
    K = np.array([[1.0, math.exp(-a * 0.9)], [math.exp(-a * 0.9), 1.0]]) + sig * np.eye(2)
    post = exact_posterior(OU, t2, y2, sig)
    Kf = K - sig * np.eye(2)
    np.testing.assert_allclose(post.mean, Kf @ np.linalg.solve(K, y2), rtol=1e-12)
    ll = -0.5 * y2 @ np.linalg.solve(K, y2) - 0.5 * np.log(np.linalg.det(K)) - math.log(2 * math.pi)
    assert post.loglik == pytest.approx(ll, rel=1e-12)


@given(st.integers(0, 1000))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 5, 12)
    y = rng.standard_normal(12)
    q = np.linspace(0, 5, 7)
    perm = rng.permutation(12)
    a = exact_posterior(OU, t, y, 0.1, q)
    b = exact_posterior(OU, t[perm], y[perm], 0.1, q)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
    np.testing.assert_allclose(a.variance, b.variance, atol=1e-10)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-10)


def test_size_guard():
    t = np.arange(MAX_DENSE + 1, dtype=float)
    with pytest.raises(ValueError, match="limited"):
        exact_posterior(OU, t, np.zeros_like(t), 0.1)


def test_jitter_rescues_singular_gram(caplog):
    t = np.array([0.0, 0.0, 1.0])
    post = exact_posterior(OU, t, np.array([1.0, 1.0, 0.0]), 0.0)
    assert np.all(np.isfinite(post.mean))
    assert "jitter" in caplog.text


def test_factorization_failure_reports_condition():
    bad = lambda lag: -np.ones_like(lag)  # noqa: E731
    with pytest.raises(OracleError, match="condition"):
        exact_posterior(bad, [0.0, 1.0], [0.0, 0.0], 0.0)


def test_condition_gaussian_matches_posterior():
    t = np.array([0.0, 0.5, 1.5, 3.0])
    K = gram(OU, t)
    m, C = condition_gaussian(np.zeros(4), K, [0, 2], [1.0, -1.0])
    post = exact_posterior(OU, t[[0, 2]], [1.0, -1.0], 0.0, t[[1, 3]])
    np.testing.assert_allclose(m, post.mean, atol=1e-12)
    np.testing.assert_allclose(np.diag(C), post.variance, atol=1e-12)


def test_kld_values():
    m = np.array([0.1, -2.0])
    v = np.array([0.5, 3.0])
    assert avg_marginal_kld((m, v), (m, v)) == 0.0
    expect = 0.5 * (2 - 1 - math.log(2))
    assert avg_marginal_kld((m, 2 * v), (m, v)) == pytest.approx(expect, rel=1e-14)
    with pytest.raises(ValueError):
        gaussian_kld(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        avg_marginal_kld((m, v), (m[:1], v[:1]))


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(-5, 5), st.floats(0.01, 10))
def test_kld_nonnegative(m1, v1, m2, v2):
    assert gaussian_kld(m1, v1, m2, v2) >= 0


def test_fd_derivatives():
    s3 = math.sqrt(3)
    m32 = kernel_function(HidaMaternSpec(1.0, s3, 0.0, 1))
    assert fd_derivative(m32, 0, 1.0) == pytest.approx(m32(1.0))
    assert fd_derivative(m32, 1, 1.0, 1e-4) == pytest.approx(-3 * math.exp(-s3), abs=1e-5)
    se = lambda t: np.exp(-0.5 * np.asarray(t) ** 2)  # noqa: E731
    assert fd_derivative(se, 2, 0.5, 1e-3) == pytest.approx(
        (0.25 - 1) * math.exp(-0.125), abs=1e-5)
    with pytest.raises(ValueError):
        fd_derivative(se, 2, 0.001, 0.01)
