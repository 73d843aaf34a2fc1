import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from foliaflow.elasticity import ElasticParams, assemble_stiffness, solve_response
from foliaflow.evolution import EvolutionError, FlowState, evolve, step
from foliaflow.force import ForceSpec, initial_force
from foliaflow.kernel import KernelParams
from foliaflow.mesh import compute_frames
from foliaflow.shapes import cap2d

from conftest import wavy_slab

KERNEL = KernelParams(0.01)
ELASTIC = ElasticParams(1, 3, 3)


@pytest.fixture(scope="module")
def cap():
    mesh, chart = cap2d(resolution=40, num_layers=3)
    return mesh, ForceSpec(20, h=3.0)


def test_zero_force_is_identity(cap):
    mesh, _ = cap
    res = evolve(mesh, np.zeros((mesh.num_vertices, 2)), ELASTIC, KERNEL, n_steps=4)
    np.testing.assert_array_equal(res.final.positions, mesh.vertices)
    np.testing.assert_array_equal(res.final.jacobians, np.broadcast_to(np.eye(2), res.final.jacobians.shape))


def test_bottom_layer_never_moves(cap):
    mesh, spec = cap
    res = evolve(mesh, spec, ELASTIC, KERNEL, n_steps=5, keep_trajectory=True)
    bottom = mesh.bottom_mask()
    for state in res.trajectory:
        assert np.array_equal(state.positions[bottom], mesh.vertices[bottom])
    assert all(d.min_det > 0 for d in res.diagnostics)
    assert len(res.trajectory) == 6 and len(res.diagnostics) == 5


def test_first_step_is_small_deformation_response(cap):
    mesh, spec = cap
    j0 = initial_force(mesh, spec)
    dt = 0.01
    new, info = step(FlowState.initial(mesh, j0), mesh, j0, ELASTIC, KERNEL, dt)
    mask = mesh.bottom_mask()
    a = assemble_stiffness(mesh, compute_frames(mesh), ELASTIC)
    force = j0 * mesh.lumped_weights()[:, None]
    force[mask] = 0
    v0 = solve_response(mesh, a, force, mask, KERNEL.sigma_v, ELASTIC.delta).velocity
    np.testing.assert_allclose(new.positions - mesh.vertices, dt * v0, rtol=1e-12, atol=1e-15)
    assert info.cg_iterations > 0


def test_local_error_second_order(cap):
    mesh, spec = cap
    j0 = initial_force(mesh, spec)
    s0 = FlowState.initial(mesh, j0)
    gaps = []
    for dt in (0.2, 0.1, 0.05):
        full, _ = step(s0, mesh, j0, ELASTIC, KERNEL, dt)
        half, _ = step(s0, mesh, j0, ELASTIC, KERNEL, dt / 2)
        half, _ = step(half, mesh, j0, ELASTIC, KERNEL, dt / 2, index=1)
        gaps.append(np.abs(full.positions - half.positions).max())
    orders = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert orders.min() >= 1.8


def test_force_transport_by_uniform_scaling(cap):
    mesh, spec = cap
    j0 = initial_force(mesh, spec)
    s = 1.7
    state = FlowState(0.0, mesh.vertices.copy(), np.broadcast_to(s * np.eye(2), (mesh.num_vertices, 2, 2)).copy(), j0)
    new, _ = step(state, mesh, j0, ELASTIC, KERNEL, 0.05)
    np.testing.assert_array_equal(new.force, s * j0)


def test_transported_tensor_is_rigid_equivariant(rng):
    mesh = wavy_slab(rng)
    rot = Rotation.random(random_state=3).as_matrix()
    moved = mesh.with_positions(mesh.vertices @ rot.T + 1.5)
    params = ElasticParams(1.0, 3.0, 2.0, mu_tan=0.5)
    a0 = assemble_stiffness(mesh, compute_frames(mesh), params)
    a1 = assemble_stiffness(moved, compute_frames(moved), params)
    u = rng.standard_normal((mesh.num_vertices, 3))
    e0 = u.ravel() @ (a0 @ u.ravel())
    e1 = (u @ rot.T).ravel() @ (a1 @ (u @ rot.T).ravel())
    assert e1 == pytest.approx(e0, rel=1e-8)


def test_fold_over_aborts_with_step_index(cap):
    mesh, _ = cap
    spec = ForceSpec(20, h=3000.0)
    with pytest.raises(EvolutionError) as info:
        evolve(mesh, spec, ELASTIC, KERNEL, n_steps=1)
    assert info.value.step == 0
    assert "det" in str(info.value)


def test_argument_checks(cap):
    mesh, spec = cap
    with pytest.raises(ValueError):
        evolve(mesh, spec, ELASTIC, KERNEL, n_steps=0)
    j0 = initial_force(mesh, spec)
    with pytest.raises(ValueError):
        step(FlowState.initial(mesh, j0), mesh, j0, ELASTIC, KERNEL, 0.0)


def test_deterministic(cap):
    mesh, spec = cap
    a = evolve(mesh, spec, ELASTIC, KERNEL, n_steps=3)
    b = evolve(mesh, spec, ELASTIC, KERNEL, n_steps=3)
    np.testing.assert_array_equal(a.final.positions, b.final.positions)


def test_jacobi_and_elastic_preconditioners_agree(cap):
    from foliaflow.evolution import SolverOptions

    mesh, spec = cap
    a = evolve(mesh, spec, ELASTIC, KERNEL, n_steps=2)
    b = evolve(mesh, spec, ELASTIC, KERNEL, n_steps=2, options=SolverOptions(1e-10, "elastic"))
    np.testing.assert_allclose(a.final.positions, b.final.positions, atol=1e-7)
