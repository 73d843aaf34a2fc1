import numpy as np
import pytest

from foliaflow.cg import ConvergenceError, conjugate_gradient


def spd(rng, n, cond=100.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.geomspace(1.0, cond, n)) @ q.T


def test_solves_spd_system(rng):
    a = spd(rng, 40)
    b = rng.standard_normal(40)
    x, its, res = conjugate_gradient(lambda v: a @ v, b, tol=1e-12)
    np.testing.assert_allclose(x, np.linalg.solve(a, b), rtol=1e-9)
    assert res <= 1e-12 and its <= 400


def test_jacobi_preconditioner_helps(rng):
    d = np.geomspace(1, 1e6, 60)
    a = np.diag(d) + 1e-3 * spd(rng, 60)
    b = rng.standard_normal(60)
    _, its_plain, _ = conjugate_gradient(lambda v: a @ v, b, maxiter=10_000)
    _, its_pc, _ = conjugate_gradient(lambda v: a @ v, b, precond=lambda r: r / np.diag(a))
    assert its_pc < its_plain


def test_zero_rhs():
    x, its, res = conjugate_gradient(lambda v: v, np.zeros(5))
    assert its == 0 and res == 0.0 and not x.any()


def test_non_convergence_carries_residual(rng):
    a = spd(rng, 50, cond=1e8)
    with pytest.raises(ConvergenceError) as info:
        conjugate_gradient(lambda v: a @ v, rng.standard_normal(50), maxiter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 1e-8


def test_indefinite_operator_detected():
    a = np.diag([1.0, -1.0])
    with pytest.raises(ConvergenceError, match="positive definite"):
        conjugate_gradient(lambda v: a @ v, np.array([1.0, 1.0]))


def test_warm_start(rng):
    a = spd(rng, 20)
    b = rng.standard_normal(20)
    exact = np.linalg.solve(a, b)
    _, its, _ = conjugate_gradient(lambda v: a @ v, b, x0=exact)
    assert its == 0
