"""Canned experiments shared by the command line and the acceptance checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import Chart
from .elasticity import ElasticParams
from .evolution import EvolveResult, SolverOptions, evolve
from .force import ForceSpec, initial_force, layer_distances
from .kernel import KernelParams
from .mesh import FoliatedMesh

# (name, lambda_tan, lambda_tsv, lambda_ang)
MODULI_CASES = (
    ("tangent-easy", 1.0, 3.0, 3.0),
    ("transverse-easy", 3.0, 1.0, 3.0),
    ("angle-easy", 3.0, 3.0, 1.0),
)


def vertex_normals(mesh: FoliatedMesh) -> np.ndarray:
    """Unit normals of the layer through each vertex, shape (N, dim)."""
    n = mesh.vertices_per_layer
    out = np.zeros((mesh.num_vertices, mesh.dim))
    for nu in range(mesh.num_layers):
        pts = mesh.layer(nu)
        acc = np.zeros((n, mesh.dim))
        f = mesh.faces
        if mesh.dim == 2:
            t = pts[f[:, 1]] - pts[f[:, 0]]
            nrm = np.stack([-t[:, 1], t[:, 0]], axis=1)
        else:
            nrm = np.cross(pts[f[:, 1]] - pts[f[:, 0]], pts[f[:, 2]] - pts[f[:, 0]])
        for j in range(f.shape[1]):
            np.add.at(acc, f[:, j], nrm)
        out[nu * n:(nu + 1) * n] = acc / np.linalg.norm(acc, axis=1, keepdims=True)
    return out


def split_displacement(mesh0: FoliatedMesh, displacement: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex magnitudes of the in-layer and across-layer displacement parts.

    The split is orthogonal with respect to the undeformed layer normal.
    """
    normals = vertex_normals(mesh0)
    across = np.einsum("ij,ij->i", displacement, normals)
    along = displacement - across[:, None] * normals
    return np.linalg.norm(along, axis=1), np.abs(across)


@dataclass
class ModuliCase:
    name: str
    elastic: ElasticParams
    result: EvolveResult
    mean_tangential: float
    mean_transversal: float
    total: float

    @property
    def ratio(self) -> float:
        return self.mean_tangential / self.mean_transversal

    @property
    def min_det(self) -> float:
        return min(s.min_det for s in self.result.diagnostics)

    def row(self) -> tuple:
        e = self.elastic
        return (self.name, e.lambda_tan, e.lambda_tsv, e.lambda_ang, self.mean_tangential,
                self.mean_transversal, self.ratio, self.total, self.min_det)


MODULI_HEADER = ("case", "lambda_tan", "lambda_tsv", "lambda_ang", "mean_tangential",
                 "mean_transversal", "ratio", "total", "min_det")


def region_near_center(mesh0: FoliatedMesh, spec: ForceSpec, radius: float) -> np.ndarray:
    """Vertices on or above the centre layer within ``radius`` (layer geodesic) of it."""
    loc = spec.location(mesh0)
    dist = layer_distances(mesh0, loc).ravel()
    layer = np.repeat(np.arange(mesh0.num_layers), mesh0.vertices_per_layer)
    return (dist <= radius) & (layer >= loc.layer)


def compare_moduli(
    mesh0: FoliatedMesh,
    spec: ForceSpec,
    cases=MODULI_CASES,
    kernel: KernelParams = KernelParams(),
    n_steps: int = 10,
    delta: float = 1e-6,
    options: SolverOptions = SolverOptions(),
) -> list[ModuliCase]:
    """Flow the same initial force under each moduli triple.

    All three statistics are means over one region: vertices on or above
    the centre layer within three tangential widths of the centre.
    ``total`` is the mean displacement magnitude there.
    """
    j0 = initial_force(mesh0, spec)
    near = region_near_center(mesh0, spec, 3.0 * spec.sigma_tan)
    out = []
    for name, lt, ls, la in cases:
        elastic = ElasticParams(lt, ls, la, delta=delta)
        res = evolve(mesh0, j0, elastic, kernel, n_steps, options=options)
        disp = res.final.positions - mesh0.vertices
        tan, tsv = split_displacement(mesh0, disp)
        out.append(ModuliCase(
            name, elastic, res, float(tan[near].mean()), float(tsv[near].mean()),
            float(np.linalg.norm(disp[near], axis=1).mean()),
        ))
    return out


def apex_c_hat(mesh0: FoliatedMesh, chart: Chart) -> np.ndarray:
    """Chart coordinate of the middle-layer vertex with the largest last coordinate."""
    k = int(np.argmax(mesh0.layer(chart.layer)[:, -1]))
    return chart.coordinates_of(k)
