import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma, kv

from foliaflow.kernel import GramOperator, KernelParams, kernel_matrix, matern3, matern3_grad


def bessel_matern(r, sigma, nu=3.5):
    """Textbook Matern form in terms of the modified Bessel function."""
    u = np.asarray(r, float) / sigma
    return 2 ** (1 - nu) / gamma(nu) * u**nu * kv(nu, u)


def test_value_at_origin():
    assert matern3(0.0) == 1.0


def test_value_at_one_width():
    assert matern3(0.01, 0.01) == pytest.approx(37 / 15 * np.exp(-1), rel=1e-14)
    assert matern3(0.01, 0.01) == pytest.approx(0.907436, abs=1e-6)


@given(st.floats(1e-4, 30.0), st.floats(1e-3, 2.0))
def test_matches_bessel_form(u, sigma):
    r = u * sigma
    assert matern3(r, sigma) == pytest.approx(bessel_matern(r, sigma), rel=1e-10)


def test_monotone_decay():
    r = np.linspace(0, 1, 2001)
    k = matern3(r, 0.01)
    assert np.all(np.diff(k) <= 0)
    assert k[-1] < 1e-38


def test_grad_zero_at_coincident_points():
    x = np.array([0.3, -0.2, 0.1])
    np.testing.assert_array_equal(matern3_grad(x, x), np.zeros(3))


def test_grad_antisymmetry(rng):
    x, y = rng.standard_normal((2, 3)) * 0.02
    np.testing.assert_allclose(matern3_grad(x, y), -matern3_grad(y, x), rtol=0, atol=0)


def test_grad_matches_finite_differences(rng):
    sigma = 0.05
    for _ in range(20):
        x, y = rng.uniform(-0.1, 0.1, (2, 3))
        h = 1e-6
        fd = np.array([
            (matern3(np.linalg.norm(x + h * e - y), sigma) - matern3(np.linalg.norm(x - h * e - y), sigma)) / (2 * h)
            for e in np.eye(3)
        ])
        np.testing.assert_allclose(matern3_grad(x, y, sigma), fd, atol=1e-7)


def test_single_point_identity():
    np.testing.assert_array_equal(kernel_matrix(np.zeros((1, 3)), KernelParams()), np.eye(3))


def test_far_points_block_diagonal():
    k = kernel_matrix(np.array([[0.0, 0.0], [10.0, 0.0]]), KernelParams(0.01))
    np.testing.assert_allclose(k, np.eye(4), atol=1e-300)


def test_psd_and_symmetric_on_random_sets(rng):
    for _ in range(50):
        n = rng.integers(2, 30)
        pts = rng.uniform(0, 0.05, (n, rng.integers(2, 4)))
        k = kernel_matrix(pts, KernelParams(0.01))
        assert np.abs(k - k.T).max() <= 1e-14
        assert np.linalg.eigvalsh(k).min() >= -1e-12


def test_mask_eliminates_points():
    pts = np.array([[0.0, 0.0], [0.01, 0.0], [0.0, 0.02]])
    mask = np.array([True, False, False])
    k = kernel_matrix(pts, KernelParams(), mask)
    np.testing.assert_array_equal(k, kernel_matrix(pts[1:], KernelParams()))


def test_translation_invariance(rng):
    pts = rng.uniform(0, 0.05, (12, 3))
    k1 = kernel_matrix(pts, KernelParams())
    k2 = kernel_matrix(pts + np.array([5.0, -2.0, 1.0]), KernelParams())
    np.testing.assert_allclose(k1, k2, atol=1e-13)


def test_duplicates_get_jitter(caplog):
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    k = kernel_matrix(pts, KernelParams())
    assert "duplicate" in caplog.text
    assert np.linalg.eigvalsh(k).min() > 0


def test_gram_operator_matches_dense(rng):
    pts = rng.uniform(0, 0.05, (15, 3))
    g = GramOperator(pts, 0.01)
    x = rng.standard_normal(45)
    np.testing.assert_allclose(g.matvec(x), kernel_matrix(pts, KernelParams()) @ x, rtol=1e-13)
    np.testing.assert_allclose(g.dense(), kernel_matrix(pts, KernelParams()), rtol=0, atol=0)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 0.04, (8, 3))
    g = GramOperator(pts, 0.02)
    a = rng.standard_normal(24)
    x = rng.uniform(0, 0.04, (3, 3))
    jac = g.jacobian(x, a)
    h = 1e-7
    for d, e in enumerate(np.eye(3)):
        fd = (g.evaluate(x + h * e, a) - g.evaluate(x - h * e, a)) / (2 * h)
        np.testing.assert_allclose(jac[:, :, d], fd, rtol=1e-5, atol=1e-6 * np.abs(a).max())


def test_invalid_width():
    with pytest.raises(ValueError):
        KernelParams(sigma_v=0.0)
