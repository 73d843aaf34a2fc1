"""Forward integration of the layered elastic flow.

Each step re-derives the layer frames from the deformed mesh, transports the
initial force by the flow Jacobian, solves the regularized elastic system and
advances positions and Jacobians by forward Euler.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .elasticity import ElasticParams, assemble_stiffness, solve_response
from .force import ForceSpec, initial_force
from .kernel import KernelParams
from .mesh import FoliatedMesh, compute_frames

_LOGGER = logging.getLogger(__name__)


class EvolutionError(RuntimeError):
    """The flow stopped being a diffeomorphism or the solve failed."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class FlowState:
    t: float
    positions: np.ndarray
    jacobians: np.ndarray
    force: np.ndarray

    @classmethod
    def initial(cls, mesh: FoliatedMesh, j0: np.ndarray) -> "FlowState":
        eye = np.broadcast_to(np.eye(mesh.dim), (mesh.num_vertices, mesh.dim, mesh.dim)).copy()
        return cls(0.0, mesh.vertices.copy(), eye, np.array(j0, dtype=float))

    def min_det(self) -> float:
        return float(np.linalg.det(self.jacobians).min())


@dataclass
class StepInfo:
    step: int
    t: float
    min_det: float
    cg_iterations: int
    max_displacement: float


@dataclass
class EvolveResult:
    final: FlowState
    diagnostics: list[StepInfo]
    trajectory: list[FlowState] = field(default_factory=list)

    @property
    def displacement(self) -> np.ndarray:
        return self.final.positions - self.trajectory[0].positions if self.trajectory else None


@dataclass(frozen=True)
class SolverOptions:
    cg_tol: float = 1e-8
    preconditioner: str = "jacobi"


def step(
    state: FlowState,
    mesh0: FoliatedMesh,
    j0: np.ndarray,
    elastic: ElasticParams,
    kernel: KernelParams,
    dt: float,
    mask: np.ndarray | None = None,
    options: SolverOptions = SolverOptions(),
    index: int = 0,
) -> tuple[FlowState, StepInfo]:
    """Advance one forward-Euler step of size ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    mask = mesh0.bottom_mask() if mask is None else mask
    mesh_t = mesh0.with_positions(state.positions)
    frames = compute_frames(mesh_t)
    j_t = np.einsum("nab,nb->na", state.jacobians, j0)
    force = j_t * mesh_t.lumped_weights()[:, None]
    force[mask] = 0.0
    stiffness = assemble_stiffness(mesh_t, frames, elastic)
    resp = solve_response(
        mesh_t, stiffness, force, mask, kernel.sigma_v, elastic.delta,
        tol=options.cg_tol, preconditioner=options.preconditioner,
    )
    positions = state.positions + dt * resp.velocity
    positions[mask] = mesh0.vertices[mask]
    if np.any(resp.coeffs):
        dv = resp.gram.jacobian(state.positions, resp.coeffs)
        jac = state.jacobians + dt * np.einsum("nab,nbc->nac", dv, state.jacobians)
    else:
        jac = state.jacobians.copy()
    dets = np.linalg.det(jac)
    min_det = float(dets.min())
    if not min_det > 0:
        raise EvolutionError(
            f"det(Dphi) = {min_det:.3e} <= 0 at step {index}; use a smaller dt or larger delta",
            index,
        )
    new = FlowState(state.t + dt, positions, jac, j_t)
    info = StepInfo(
        index, new.t, min_det, resp.iterations,
        float(np.linalg.norm(positions - mesh0.vertices, axis=1).max()),
    )
    return new, info


def evolve(
    mesh0: FoliatedMesh,
    force: ForceSpec | np.ndarray,
    elastic: ElasticParams,
    kernel: KernelParams,
    n_steps: int = 10,
    keep_trajectory: bool = False,
    mask: np.ndarray | None = None,
    options: SolverOptions = SolverOptions(),
) -> EvolveResult:
    """Integrate from ``t = 0`` to ``t = 1`` with ``n_steps`` equal steps.

    ``force`` is either a :class:`ForceSpec` (``j0`` is derived on ``mesh0``)
    or a precomputed ``(N, dim)`` array ``j0``.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    j0 = initial_force(mesh0, force) if isinstance(force, ForceSpec) else np.asarray(force, float)
    state = FlowState.initial(mesh0, j0)
    trajectory = [state] if keep_trajectory else []
    diagnostics = []
    dt = 1.0 / n_steps
    for i in range(n_steps):
        state, info = step(state, mesh0, j0, elastic, kernel, dt, mask, options, index=i)
        diagnostics.append(info)
        if keep_trajectory:
            trajectory.append(state)
        _LOGGER.debug("step %d: min det %.4f, %d CG its", i, info.min_det, info.cg_iterations)
    return EvolveResult(state, diagnostics, trajectory)
