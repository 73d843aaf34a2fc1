"""Curved-Gaussian force potential and its discrete gradient."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .chart import CenterLocation
from .mesh import FoliatedMesh, MeshError, chain_lengths_from, layer_graph

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForceSpec:
    """Parameters of the curved Gaussian ``g``.

    ``center`` is either a :class:`CenterLocation` or a vertex column on the
    middle layer. ``sign`` selects ``j0 = sign * grad g``.
    """

    center: CenterLocation | int
    h: float = 1.0
    sigma_tan: float = 0.1
    sigma_tsv: float = 0.05
    sign: float = 1.0
    c_hat: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"peak height must be positive, got {self.h}")
        if not (self.sigma_tan > 0 and self.sigma_tsv > 0):
            raise ValueError("Gaussian widths must be positive")

    def location(self, mesh: FoliatedMesh) -> CenterLocation:
        if isinstance(self.center, CenterLocation):
            loc = self.center
        else:
            loc = CenterLocation.at_vertex(mesh.middle_layer, int(self.center))
        if loc.layer != mesh.middle_layer:
            raise ValueError(
                f"force centre must lie on the middle layer {mesh.middle_layer}, got {loc.layer}"
            )
        return loc


def layer_distances(mesh: FoliatedMesh, loc: CenterLocation) -> np.ndarray:
    """Layer-wise geodesic distance from the image of ``loc`` on every layer.

    Entry ``[nu, k]`` is the Dijkstra distance on layer ``nu`` from the point
    with ``loc``'s barycentric coordinates on that layer to column ``k``.
    The point is joined to its face vertices by straight segments.
    """
    cols = np.asarray(loc.columns)
    w = np.asarray(loc.weights)
    out = np.empty((mesh.num_layers, mesh.vertices_per_layer))
    for nu in range(mesh.num_layers):
        graph = layer_graph(mesh, nu)
        d = dijkstra(graph, directed=False, indices=cols)
        d = np.atleast_2d(d)
        if not np.all(np.isfinite(d)):
            raise MeshError(f"layer {nu} graph is disconnected")
        pts = mesh.layer(nu)
        src = w @ pts[cols]
        offset = np.linalg.norm(pts[cols] - src, axis=1)
        out[nu] = np.min(d + offset[:, None], axis=0)
    return out


def curved_gaussian_field(mesh: FoliatedMesh, spec: ForceSpec, unit: bool = False) -> np.ndarray:
    """Curved Gaussian at every vertex (layer-major), height 1 if ``unit``.

    ``d_tan`` averages the geodesic on the centre's layer (centre to the
    point's column) and the geodesic on the point's layer (centre's column to
    the point). ``d_tsv`` averages the transverse chains through both columns.
    """
    loc = spec.location(mesh)
    dist = layer_distances(mesh, loc)
    nu_c = loc.layer
    d_tan = 0.5 * (dist[nu_c][None, :] + dist)
    chains = chain_lengths_from(mesh, nu_c)
    chain_c = chains[:, list(loc.columns)] @ np.asarray(loc.weights)
    d_tsv = 0.5 * (chain_c[:, None] + chains)
    g = np.exp(-d_tan**2 / (2 * spec.sigma_tan**2) - d_tsv**2 / (2 * spec.sigma_tsv**2))
    return (g if unit else spec.h * g).ravel()


def curved_gaussian(mesh: FoliatedMesh, spec: ForceSpec, p) -> float:
    """Curved Gaussian at vertex ``p = (column, layer)``."""
    k, nu = p
    return float(curved_gaussian_field(mesh, spec)[mesh.index(k, nu)])


def one_ring_pairs(mesh: FoliatedMesh) -> np.ndarray:
    """Directed neighbour pairs (layer edges plus transverse edges), shape (E, 2)."""
    n = mesh.vertices_per_layer
    edges = mesh.layer_edges()
    pairs = []
    for nu in range(mesh.num_layers):
        pairs.append(edges + nu * n)
    cols = np.arange(n)
    for nu in range(mesh.num_layers - 1):
        pairs.append(np.stack([cols + nu * n, cols + (nu + 1) * n], axis=1))
    pairs = np.concatenate(pairs)
    return np.concatenate([pairs, pairs[:, ::-1]])


def gradient_operator(mesh: FoliatedMesh, rcond: float = 1e-10) -> sp.csr_matrix:
    """Sparse ``G`` with ``(G @ f).reshape(-1, dim)`` the 1-ring least-squares gradient.

    Each vertex fits ``f(q) ~ f(p) + w^T (q - p)`` over its neighbours with
    weights ``1/|q - p|^2``. Rank-deficient rings fall back to a
    pseudo-inverse and are logged.
    """
    if "gradient" in mesh._cache:
        return mesh._cache["gradient"]
    dim = mesh.dim
    nv = mesh.num_vertices
    pairs = one_ring_pairs(mesh)
    i, j = pairs[:, 0], pairs[:, 1]
    d = mesh.vertices[j] - mesh.vertices[i]
    wts = 1.0 / np.sum(d**2, axis=1)
    normal = np.zeros((nv, dim, dim))
    np.add.at(normal, i, wts[:, None, None] * d[:, :, None] * d[:, None, :])
    scale = np.trace(normal, axis1=1, axis2=2)
    cond = np.linalg.cond(normal / scale[:, None, None])
    bad = np.flatnonzero(~(cond < 1.0 / rcond))
    inv = np.empty_like(normal)
    good = np.setdiff1d(np.arange(nv), bad)
    inv[good] = np.linalg.inv(normal[good])
    if bad.size:
        _LOGGER.warning("rank-deficient 1-ring at vertices %s; using pseudo-inverse", bad[:10].tolist())
        inv[bad] = np.linalg.pinv(normal[bad], rcond=rcond)
    coef = np.einsum("eab,eb->ea", inv[i], wts[:, None] * d)  # weight on f_j - f_i
    rows = (i[:, None] * dim + np.arange(dim)).ravel()
    data = coef.ravel()
    g = sp.coo_matrix((data, (rows, np.repeat(j, dim))), shape=(nv * dim, nv))
    g = g - sp.coo_matrix((data, (rows, np.repeat(i, dim))), shape=(nv * dim, nv))
    g = g.tocsr()
    mesh._cache["gradient"] = g
    return g


def vertex_gradient(mesh: FoliatedMesh, values: np.ndarray) -> np.ndarray:
    """Least-squares gradient of a vertex scalar field, shape (N, dim)."""
    return (gradient_operator(mesh) @ np.asarray(values, dtype=float)).reshape(-1, mesh.dim)


def initial_force(mesh: FoliatedMesh, spec: ForceSpec) -> np.ndarray:
    """``j0 = sign * grad g`` at every vertex, shape (N, dim)."""
    return spec.sign * vertex_gradient(mesh, curved_gaussian_field(mesh, spec))
