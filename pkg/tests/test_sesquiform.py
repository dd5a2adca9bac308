from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikelab.errors import DimensionError, MomentError
from spikelab.sesquiform import (
    FormStats,
    MomentSpec,
    b_ab_covariance,
    b_covariance,
    c_covariance,
    d_covariance,
    form_stats,
    gamma_covariance,
    gamma_from_b,
    gamma_from_bc,
    z_vector,
)

TABLES = ("rho", "fourth", "xy", "xx", "yy", "abs_x4", "abs_y4", "xbar_x", "ybar_y")


def _random_cov(rng, k: int) -> np.ndarray:
    g = rng.standard_normal((2 * k, 2 * k))
    return g @ g.T / (2 * k) + 0.1 * np.eye(2 * k)


def _stats(rng, n: int = 40) -> FormStats:
    g = rng.standard_normal((n, n))
    return form_stats((g + g.T) / np.sqrt(2 * n))


def test_form_stats_definitions():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((50, 50))
    a = g + g.T
    s = form_stats(a)
    assert s.theta == pytest.approx(np.sum(np.linalg.eigvalsh(a) ** 2) / 50, rel=1e-12)
    assert s.omega == pytest.approx(np.mean(np.diag(a) ** 2), rel=1e-12)
    assert s.tau == pytest.approx(s.theta, rel=1e-12)
    assert s.theta >= s.omega
    with pytest.raises(DimensionError):
        form_stats(np.ones((2, 3)))


def test_form_stats_complex_tau():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    s = form_stats(a)
    assert s.tau == pytest.approx(np.trace(a @ a.T) / 30, rel=1e-12)
    assert s.theta == pytest.approx(np.trace(a @ a.conj().T).real / 30, rel=1e-12)


def test_z_vector_values_and_errors():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 20))
    y = rng.standard_normal((3, 20))
    a = rng.standard_normal((20, 20))
    z = z_vector(x, y, a, [0.1, 0.2, 0.3])
    assert z.values.shape == (3,) and z.n == 20
    assert z.values[1] == pytest.approx((x[1] @ a @ y[1] - 0.2 * np.trace(a)) / np.sqrt(20))
    assert not np.iscomplexobj(z.values)
    with pytest.raises(DimensionError):
        z_vector(x, y[:2], a, [0, 0, 0])
    with pytest.raises(DimensionError):
        z_vector(x, y, a[:5, :5], [0, 0, 0])
    with pytest.raises(DimensionError):
        z_vector(x, y, a, [0, 0])


def test_moment_spec_validation():
    spec = MomentSpec.gaussian(np.eye(2))
    with pytest.raises(MomentError):
        MomentSpec(**{t: getattr(spec, t) for t in TABLES[:-1]}, ybar_y=np.ones((2, 2)) * np.nan)
    with pytest.raises(MomentError):
        MomentSpec(**{t: getattr(spec, t) for t in TABLES[:-1]}, ybar_y=np.ones((3, 3)))
    with pytest.raises(DimensionError):
        MomentSpec.gaussian(np.eye(3))


def test_gaussian_moments_match_samples():
    rng = np.random.default_rng(3)
    k = 2
    cov = _random_cov(rng, k)
    w = rng.multivariate_normal(np.zeros(2 * k), cov, size=400_000)
    exact = MomentSpec.gaussian(cov)
    emp = MomentSpec.from_samples(w[:, :k], w[:, k:])
    for name in TABLES:
        se = emp.stderr[name]
        diff = np.abs(np.asarray(getattr(emp, name)) - np.asarray(getattr(exact, name)))
        assert np.all(diff <= 5 * se + 1e-12), name


def test_complex_gaussian_moments_match_samples():
    rng = np.random.default_rng(4)
    k = 2
    l = np.linalg.cholesky(_random_cov(rng, k))
    n = 300_000
    w = (l @ (rng.standard_normal((2 * k, n)) + 1j * rng.standard_normal((2 * k, n))) / np.sqrt(2)).T
    exact = MomentSpec.gaussian(l @ l.T, np.zeros((2 * k, 2 * k)))
    emp = MomentSpec.from_samples(w[:, :k], w[:, k:])
    for name in TABLES:
        se = emp.stderr[name]
        diff = np.abs(np.asarray(getattr(emp, name)) - np.asarray(getattr(exact, name)))
        assert np.all(diff <= 5 * se + 1e-12), name


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_real_b_is_symmetric_psd(k, seed):
    rng = np.random.default_rng(seed)
    b = b_covariance(MomentSpec.gaussian(_random_cov(rng, k)), _stats(rng))
    assert not np.iscomplexobj(b)
    assert np.allclose(b, b.T, atol=1e-12)
    assert np.linalg.eigvalsh(b).min() >= -1e-9 * max(1.0, np.abs(b).max())


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_quadratic_form_covariance_is_b_with_y_equal_x(k, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((k, k))
    c = g @ g.T + 0.1 * np.eye(k)
    joint = np.block([[c, c], [c, c]])
    spec = MomentSpec.gaussian(joint)
    stats = _stats(rng)
    assert np.allclose(d_covariance(spec, stats), b_covariance(spec, stats), rtol=1e-12, atol=1e-12)


def test_d_covariance_rejects_complex():
    cov = np.array([[1.0, 0.5j], [-0.5j, 1.0]])
    spec = MomentSpec.gaussian(cov, np.zeros((2, 2)))
    with pytest.raises(MomentError):
        d_covariance(spec, FormStats(1.0, 2.0, 2.0))


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_gamma_block_identities(k, seed):
    rng = np.random.default_rng(seed)
    spec = MomentSpec.gaussian(_random_cov(rng, k))
    stats = _stats(rng)
    g = gamma_covariance(spec, stats)
    b_a, b_b = b_ab_covariance(spec, stats)
    assert g.shape == (2 * k, 2 * k)
    assert np.allclose(g[:k, :k] + g[k:, k:], 0.5 * (b_a + b_b), atol=1e-12)
    # real data: no coupling between real and imaginary parts
    assert np.allclose(g[:k, k:], 0.0)
    with pytest.raises(DimensionError):
        gamma_from_b(np.eye(k), np.eye(k + 1), np.eye(k))


def test_b_matches_monte_carlo_complex_quadratic_forms():
    # X = Y complex circular Gaussian rows with a real symmetric weight matrix
    rng = np.random.default_rng(5)
    n, reps, k = 200, 3000, 2
    g = rng.standard_normal((n, n))
    a = (g + g.T) / np.sqrt(2 * n)
    c = np.array([[1.0, 0.6], [0.6, 2.0]])
    l = np.linalg.cholesky(c)
    eps = (rng.standard_normal((reps, k, n)) + 1j * rng.standard_normal((reps, k, n))) / np.sqrt(2)
    x = np.einsum("ij,rjn->rin", l, eps)
    forms = np.einsum("rin,nm,rim->ri", x.conj(), a, x)
    z = (forms.real - np.diag(c) * np.trace(a)) / np.sqrt(n)
    joint = np.block([[c, c], [c, c]])
    spec = MomentSpec.gaussian(joint, np.zeros_like(joint))
    g_lim = gamma_covariance(spec, form_stats(a))
    emp = np.cov(z.T)
    assert np.allclose(emp, g_lim[:k, :k], rtol=0.12, atol=0.05 * np.abs(g_lim).max())
    assert np.allclose(g_lim[k:, k:], 0.0, atol=1e-12)


def _complex_cov(rng, k: int) -> np.ndarray:
    g = rng.standard_normal((2 * k, 2 * k)) + 1j * rng.standard_normal((2 * k, 2 * k))
    return g @ g.conj().T / (2 * k) + 0.1 * np.eye(2 * k)


def _non_gaussian_pairs(rng, l: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    # unit-variance complex sources, half Rademacher-type and half uniform, under the loading l
    m = l.shape[0]
    half = m // 2
    eps = np.empty((m, size), dtype=complex)
    eps[:half] = (rng.choice([-1.0, 1.0], (half, size)) + 1j * rng.choice([-1.0, 1.0], (half, size))) / np.sqrt(2)
    u = rng.uniform(-np.sqrt(1.5), np.sqrt(1.5), (2, m - half, size))
    eps[half:] = u[0] + 1j * u[1]
    w = l @ eps
    k = m // 2
    return w[:k].T, w[k:].T


def test_c_matches_b_blocks_when_y_equals_x():
    rng = np.random.default_rng(11)
    k = 2
    g = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    c = g @ g.conj().T + 0.1 * np.eye(k)
    joint = np.block([[c, c], [c, c]])
    spec = MomentSpec.gaussian(joint, np.zeros_like(joint))
    stats = _stats(rng)
    b_a, b_b = b_ab_covariance(spec, stats)
    assert np.allclose(c_covariance(spec, stats), 0.5 * (b_a + b_b), atol=1e-12)
    assert np.allclose(gamma_covariance(spec, stats, exact=True), gamma_covariance(spec, stats), atol=1e-12)


def test_c_requires_hermitian_tables():
    spec = MomentSpec.gaussian(np.eye(2))
    bare = MomentSpec(**{t: getattr(spec, t) for t in TABLES})
    with pytest.raises(MomentError):
        c_covariance(bare, FormStats(0.5, 1.0, 1.0))
    with pytest.raises(DimensionError):
        gamma_from_bc(np.eye(2), np.eye(3))


@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.sampled_from(["real", "complex", "sampled"]))
@settings(max_examples=40, deadline=None)
def test_exact_gamma_is_psd(k, seed, kind):
    rng = np.random.default_rng(seed)
    if kind == "real":
        spec = MomentSpec.gaussian(_random_cov(rng, k))
    elif kind == "complex":
        cov = _complex_cov(rng, k)
        spec = MomentSpec.gaussian(cov, np.zeros_like(cov))
    else:
        spec = MomentSpec.from_samples(*_non_gaussian_pairs(rng, np.linalg.cholesky(_complex_cov(rng, k)), 4000))
    g = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    a = (g + g.conj().T) / np.sqrt(160)
    gam = gamma_covariance(spec, form_stats(a if kind != "real" else a.real), exact=True)
    assert np.allclose(gam, gam.T, atol=1e-10)
    assert np.linalg.eigvalsh(gam).min() >= -1e-10 * max(1.0, np.abs(gam).max())


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_exact_gamma_real_data_has_no_imaginary_part(k, seed):
    rng = np.random.default_rng(seed)
    spec = MomentSpec.gaussian(_random_cov(rng, k))
    stats = _stats(rng)
    gam = gamma_covariance(spec, stats, exact=True)
    assert np.allclose(gam[:k, :k], b_covariance(spec, stats), atol=1e-12)
    assert np.allclose(gam[k:, :], 0.0, atol=1e-12)


def test_exact_gamma_matches_monte_carlo_complex_sesquilinear_forms():
    rng = np.random.default_rng(12)
    k, n, reps = 2, 200, 3000
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a = (g + g.conj().T) / np.sqrt(4 * n)
    l = np.linalg.cholesky(_complex_cov(rng, k))
    x, y = _non_gaussian_pairs(rng, l, reps * n)
    x = x.T.reshape(k, reps, n).transpose(1, 0, 2)
    y = y.T.reshape(k, reps, n).transpose(1, 0, 2)
    spec = MomentSpec.from_samples(*_non_gaussian_pairs(np.random.default_rng(13), l, 1_000_000))
    forms = np.einsum("rin,nm,rim->ri", x.conj(), a, y)
    z = (forms - np.trace(a).real * spec.rho) / np.sqrt(n)
    emp = np.cov(np.hstack([z.real, z.imag]).T)
    gam = gamma_covariance(spec, form_stats(a), exact=True)
    scale = np.abs(gam).max()
    assert np.allclose(emp, gam, rtol=0.12, atol=0.05 * scale), (emp, gam)
