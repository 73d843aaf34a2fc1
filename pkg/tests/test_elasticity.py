import numpy as np
import pytest
import scipy.sparse as sp

from foliaflow.elasticity import (
    ElasticParams,
    assemble_stiffness,
    cell_strain,
    free_dofs,
    lambda_bar,
    rigid_motions,
    solve_response,
)
from foliaflow.kernel import KernelParams, kernel_matrix
from foliaflow.mesh import LayerFrames, MeshError, compute_frames

from conftest import flat_band, flat_slab, wavy_band, wavy_slab


def density_oracle(xi, mu, lt, ls, la):
    if xi.shape == (2, 2):
        return 0.5 * lt * xi[0, 0] ** 2 + 0.5 * ls * xi[1, 1] ** 2 + la * xi[0, 1] ** 2
    return (0.5 * mu * (xi[0, 0] + xi[1, 1]) ** 2
            + 0.5 * lt * (xi[0, 0] ** 2 + xi[1, 1] ** 2 + 2 * xi[0, 1] ** 2)
            + 0.5 * ls * xi[2, 2] ** 2 + la * (xi[0, 2] ** 2 + xi[1, 2] ** 2))


def energy_oracle(mesh, frames, params, u):
    """Per-cell loop with the P1 gradient from an edge-matrix solve."""
    total = 0.0
    for c, cell in enumerate(mesh.cells):
        x = mesh.vertices[cell]
        e = (x[1:] - x[0]).T
        du = np.linalg.solve(e.T, (u[cell[1:]] - u[cell[0]])).T
        eps = 0.5 * (du + du.T)
        C = frames[c]
        vol = abs(np.linalg.det(e)) / (2 if mesh.dim == 2 else 6)
        total += vol * density_oracle(C.T @ eps @ C, params.mu, params.lambda_tan,
                                      params.lambda_tsv, params.lambda_ang)
    return total


def test_density_examples():
    assert lambda_bar(np.zeros((3, 3)), ElasticParams()) == 0.0
    assert lambda_bar(np.diag([1.0, 1.0, 0.0]), ElasticParams(1, 1, 1, mu_tan=1)) == pytest.approx(3.0)
    assert lambda_bar(np.array([[1.0, 0.0], [0.0, 0.0]]), ElasticParams(lambda_tan=2)) == pytest.approx(1.0)


def test_mu_defaults_to_lambda_tan():
    assert ElasticParams(lambda_tan=2.5).mu == 2.5
    assert ElasticParams(lambda_tan=2.5, mu_tan=0.0).mu == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        ElasticParams(lambda_tsv=-1)
    with pytest.raises(ValueError):
        ElasticParams(delta=0)


def test_strain_examples(rng):
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float) + 0.1 * rng.random((4, 3))
    assert np.abs(cell_strain(pts, np.tile([1.0, 2.0, 3.0], (4, 1)))).max() < 1e-14
    a = np.array([0.3, -0.2, 0.7])
    np.testing.assert_allclose(cell_strain(pts, pts * a), np.diag(a), atol=1e-14)
    w = np.array([0.2, -0.4, 0.1])
    assert np.abs(cell_strain(pts, np.cross(w, pts))).max() < 1e-12


def test_degenerate_cell_rejected():
    pts = np.array([[0, 0], [1, 0], [2, 0]], float)
    with pytest.raises(MeshError):
        cell_strain(pts, np.zeros((3, 2)))


@pytest.mark.parametrize("maker", [wavy_slab, wavy_band])
def test_energy_matches_cell_loop(rng, maker):
    mesh = maker(rng)
    frames = compute_frames(mesh)
    params = ElasticParams(1.3, 2.1, 0.7, mu_tan=0.4)
    a = assemble_stiffness(mesh, frames, params)
    for _ in range(3):
        u = rng.standard_normal((mesh.num_vertices, mesh.dim))
        expected = energy_oracle(mesh, frames.matrices, params, u)
        assert 0.5 * u.ravel() @ (a @ u.ravel()) == pytest.approx(expected, rel=1e-12)


def test_transversal_stretch_energy():
    mesh = flat_slab(spacing=0.1)
    params = ElasticParams(1.0, 2.5, 1.0)
    a = assemble_stiffness(mesh, compute_frames(mesh), params)
    u = np.zeros_like(mesh.vertices)
    u[:, 2] = mesh.vertices[:, 2]
    assert 0.5 * u.ravel() @ (a @ u.ravel()) == pytest.approx(0.5 * 2.5 * mesh.volume(), rel=1e-12)


@pytest.mark.parametrize("maker", [wavy_slab, wavy_band])
def test_symmetric_psd_and_rigid_null_space(rng, maker):
    mesh = maker(rng)
    a = assemble_stiffness(mesh, compute_frames(mesh), ElasticParams(1, 3, 3))
    dense = a.toarray()
    assert np.abs(dense - dense.T).max() <= 1e-12 * np.abs(dense).max()
    eig = np.linalg.eigvalsh(dense)
    anorm = np.linalg.norm(dense, 2)
    assert eig.min() >= -1e-10 * anorm
    for u in rigid_motions(mesh.vertices):
        u = u.ravel()
        assert np.linalg.norm(a @ u) <= 1e-10 * anorm * np.linalg.norm(u)


def random_in_layer_rotations(rng, frames):
    c = frames.matrices.copy()
    dim = c.shape[1]
    if dim == 2:
        c[:, :, 0] *= rng.choice([-1.0, 1.0], len(c))[:, None]
        return LayerFrames(c)
    theta = rng.uniform(0, 2 * np.pi, len(c))
    g = np.stack([np.stack([np.cos(theta), -np.sin(theta)], 1),
                  np.stack([np.sin(theta), np.cos(theta)], 1)], 1)
    c[:, :, :2] = np.einsum("cij,cjk->cik", c[:, :, :2], g)
    return LayerFrames(c)


@pytest.mark.parametrize("maker", [wavy_slab, wavy_band])
def test_frame_choice_invariance(rng, maker):
    mesh = maker(rng)
    frames = compute_frames(mesh)
    params = ElasticParams(1.0, 3.0, 2.0, mu_tan=0.5)
    a0 = assemble_stiffness(mesh, frames, params)
    u = rng.standard_normal(mesh.num_vertices * mesh.dim)
    e0 = u @ (a0 @ u)
    for _ in range(50):
        a1 = assemble_stiffness(mesh, random_in_layer_rotations(rng, frames), params)
        assert abs(u @ (a1 @ u) - e0) <= 1e-10 * abs(e0)


def _system(mesh, params, sigma_v=0.05):
    a = assemble_stiffness(mesh, compute_frames(mesh), params)
    mask = mesh.bottom_mask()
    return a, mask, kernel_matrix(mesh.vertices, KernelParams(sigma_v), mask)


def dense_oracle(a, k, mask, f, delta, dim):
    fd = free_dofs(mask, dim)
    aff = a.toarray()[np.ix_(fd, fd)]
    coeffs = np.linalg.solve(delta * k + k @ aff @ k, k @ f.ravel()[fd])
    v = np.zeros(f.size)
    v[fd] = k @ coeffs
    return v.reshape(f.shape)


def test_zero_force_zero_velocity():
    mesh = flat_band(n=6)
    a, mask, _ = _system(mesh, ElasticParams())
    resp = solve_response(mesh, a, np.zeros((mesh.num_vertices, 2)), mask, 0.05, 1e-3)
    assert not resp.velocity.any()


def test_zero_moduli_is_spline_smoothing(rng):
    mesh = flat_band(n=6)
    a, mask, k = _system(mesh, ElasticParams(0, 0, 0))
    f = rng.standard_normal((mesh.num_vertices, 2))
    delta = 0.1
    resp = solve_response(mesh, a, f, mask, 0.05, delta, tol=1e-12)
    fd = free_dofs(mask, 2)
    np.testing.assert_allclose(resp.velocity.ravel()[fd], k @ f.ravel()[fd] / delta, rtol=1e-9)


@pytest.mark.parametrize("preconditioner", ["elastic", "jacobi", "none"])
def test_matches_dense_solve(rng, preconditioner):
    mesh = wavy_band(rng, n=8)
    a, mask, k = _system(mesh, ElasticParams(1, 3, 3))
    f = rng.standard_normal((mesh.num_vertices, 2))
    f[mask] = 0
    resp = solve_response(mesh, a, f, mask, 0.05, 1e-3, tol=1e-12, preconditioner=preconditioner)
    v = dense_oracle(a, k, mask, f, 1e-3, 2)
    assert np.linalg.norm(resp.velocity - v) <= 1e-8 * np.linalg.norm(v)


def test_masked_velocity_exactly_zero(rng):
    mesh = wavy_slab(rng)
    a, mask, _ = _system(mesh, ElasticParams())
    f = rng.standard_normal((mesh.num_vertices, 3))
    resp = solve_response(mesh, a, f, mask, 0.05, 1e-3)
    assert not resp.velocity[mask].any()


def test_solution_is_optimal(rng):
    mesh = wavy_band(rng, n=8)
    a, mask, k = _system(mesh, ElasticParams(1, 3, 3))
    f = rng.standard_normal((mesh.num_vertices, 2))
    delta = 1e-2
    resp = solve_response(mesh, a, f, mask, 0.05, delta, tol=1e-13)
    fd = free_dofs(mask, 2)
    aff = a.toarray()[np.ix_(fd, fd)]
    ff = f.ravel()[fd]

    def objective(c):
        v = k @ c
        return 0.5 * delta * c @ v + 0.5 * v @ aff @ v - ff @ v

    j0 = objective(resp.coeffs)
    for _ in range(20):
        assert objective(resp.coeffs + 1e-3 * rng.standard_normal(len(fd))) > j0


def test_larger_delta_gives_smaller_norm(rng):
    mesh = wavy_band(rng, n=8)
    a, mask, k = _system(mesh, ElasticParams(1, 3, 3))
    f = rng.standard_normal((mesh.num_vertices, 2))
    norms = []
    for delta in (1e-4, 1e-3, 1e-2, 1e-1):
        resp = solve_response(mesh, a, f, mask, 0.05, delta, tol=1e-12)
        norms.append(resp.coeffs @ (k @ resp.coeffs))
    assert all(x > y for x, y in zip(norms, norms[1:]))


def test_rejects_nonpositive_delta():
    mesh = flat_band(n=5)
    a, mask, _ = _system(mesh, ElasticParams())
    with pytest.raises(ValueError):
        solve_response(mesh, a, np.zeros((mesh.num_vertices, 2)), mask, 0.05, 0.0)


def test_unknown_preconditioner():
    mesh = flat_band(n=5)
    a, mask, _ = _system(mesh, ElasticParams())
    with pytest.raises(ValueError):
        solve_response(mesh, a, np.ones((mesh.num_vertices, 2)), mask, 0.05, 1e-3,
                       preconditioner="ilu")


def test_stiffness_is_sparse_csr(rng):
    mesh = wavy_slab(rng)
    a = assemble_stiffness(mesh, compute_frames(mesh), ElasticParams())
    assert sp.isspmatrix_csr(a)
