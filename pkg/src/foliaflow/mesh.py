"""Layered (foliated) simplicial meshes.

A foliated mesh is a stack of ``L`` layers that share one connectivity. The
volume between consecutive layers is a set of prisms (3D) or quads (2D) that
are split into tetrahedra (3D) or triangles (2D) without adding vertices.

Vertices are stored layer-major: vertex ``k`` of layer ``nu`` has global index
``nu * N + k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

# sin of the smallest accepted angle between S and a layer
_MIN_TRANSVERSAL_SIN = np.sin(1e-3)


class MeshError(ValueError):
    """Raised for invalid layer stacks or degenerate geometry."""


@dataclass(frozen=True)
class FoliatedMesh:
    """Immutable layered mesh.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    num_layers : int
        Number of layers ``L``; layer 0 is the bottom, ``L - 1`` the top.
    vertices : ndarray, shape (L * N, dim)
        Layer-major vertex positions.
    faces : ndarray, shape (F, dim)
        Layer connectivity (segments in 2D, triangles in 3D) over ``0..N-1``.
        Oriented so that the layer normal points along the transversal field.
    cells : ndarray, shape (C, dim + 1)
        Positively oriented simplices (global vertex indices).
    cell_prism : ndarray, shape (C,)
        Index of the generating prism of each cell. Prism ``nu * F + f`` sits
        on face ``f`` between layers ``nu`` and ``nu + 1``.
    """

    dim: int
    num_layers: int
    vertices: np.ndarray
    faces: np.ndarray
    cells: np.ndarray
    cell_prism: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def vertices_per_layer(self) -> int:
        return self.vertices.shape[0] // self.num_layers

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_prisms(self) -> int:
        return (self.num_layers - 1) * len(self.faces)

    @property
    def middle_layer(self) -> int:
        return (self.num_layers - 1) // 2

    def layer(self, nu: int) -> np.ndarray:
        """Positions of layer ``nu``, shape (N, dim)."""
        n = self.vertices_per_layer
        return self.vertices[nu * n:(nu + 1) * n]

    def layer_stack(self) -> np.ndarray:
        """Positions as an array of shape (L, N, dim)."""
        return self.vertices.reshape(self.num_layers, self.vertices_per_layer, self.dim)

    def index(self, k, nu):
        """Global index of vertex column ``k`` on layer ``nu``."""
        return np.asarray(nu) * self.vertices_per_layer + np.asarray(k)

    def layer_of(self, idx):
        return np.asarray(idx) // self.vertices_per_layer

    def column_of(self, idx):
        return np.asarray(idx) % self.vertices_per_layer

    def bottom_mask(self) -> np.ndarray:
        """Boolean mask of bottom-layer vertices."""
        mask = np.zeros(self.num_vertices, dtype=bool)
        mask[: self.vertices_per_layer] = True
        return mask

    def with_positions(self, positions: np.ndarray) -> "FoliatedMesh":
        """Same topology with new vertex positions (no validity checks)."""
        positions = np.asarray(positions, dtype=float)
        if positions.shape != self.vertices.shape:
            raise MeshError(
                f"positions have shape {positions.shape}, expected {self.vertices.shape}"
            )
        return FoliatedMesh(
            self.dim, self.num_layers, positions, self.faces, self.cells, self.cell_prism
        )

    def prisms(self) -> np.ndarray:
        """Prism vertex indices, shape (P, 2 * dim): bottom face then top face."""
        n = self.vertices_per_layer
        nu = np.arange(self.num_layers - 1)[:, None, None]
        bottom = self.faces[None, :, :] + nu * n
        top = bottom + n
        return np.concatenate([bottom, top], axis=2).reshape(-1, 2 * self.dim)

    def cell_volumes(self) -> np.ndarray:
        return simplex_volumes(self.vertices, self.cells)

    def prism_volumes(self) -> np.ndarray:
        return np.bincount(self.cell_prism, self.cell_volumes(), minlength=self.num_prisms)

    def volume(self) -> float:
        return float(self.cell_volumes().sum())

    def lumped_weights(self) -> np.ndarray:
        """Per-vertex share of incident cell volume (1/(dim+1) of each cell)."""
        vol = self.cell_volumes() / (self.dim + 1)
        w = np.zeros(self.num_vertices)
        np.add.at(w, self.cells, vol[:, None])
        return w

    def layer_edges(self) -> np.ndarray:
        """Unique undirected edges of the layer connectivity, shape (E, 2)."""
        if "layer_edges" not in self._cache:
            f = self.faces
            if self.dim == 2:
                edges = f
            else:
                edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
            edges = np.unique(np.sort(edges, axis=1), axis=0)
            self._cache["layer_edges"] = edges
        return self._cache["layer_edges"]

    def transverse_field(self) -> np.ndarray:
        """Discrete transversal field S per vertex, shape (L * N, dim).

        ``S(p_k^nu) = p_k^{nu+1} - p_k^nu``; the top layer copies the layer below.
        """
        stack = self.layer_stack()
        s = np.empty_like(stack)
        s[:-1] = stack[1:] - stack[:-1]
        s[-1] = s[-2]
        return s.reshape(-1, self.dim)


def simplex_volumes(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    """Signed volumes (3D) or areas (2D) of simplices."""
    p = points[simplices]
    edges = p[:, 1:] - p[:, :1]
    if points.shape[1] == 2:
        return 0.5 * (edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0])
    return np.linalg.det(edges) / 6.0


def _split_prisms(faces: np.ndarray, n: int, num_layers: int) -> tuple[np.ndarray, np.ndarray]:
    """Split prisms into simplices with the min-global-index diagonal rule.

    Every quad side face is cut by the diagonal through its smallest global
    vertex index, so neighbouring prisms agree on shared faces.
    """
    dim = faces.shape[1]
    cells = []
    prism_ids = []
    num_faces = len(faces)
    if dim == 2:
        a, b = faces[:, 0], faces[:, 1]
        a_first = a < b
        for nu in range(num_layers - 1):
            ga, gb = a + nu * n, b + nu * n
            ta, tb = ga + n, gb + n
            # diagonal a-b' when a < b, otherwise b-a'
            t1 = np.where(a_first[:, None], np.stack([ga, gb, tb], 1), np.stack([ga, gb, ta], 1))
            t2 = np.where(a_first[:, None], np.stack([ga, tb, ta], 1), np.stack([gb, tb, ta], 1))
            pid = nu * num_faces + np.arange(num_faces)
            cells += [t1, t2]
            prism_ids += [pid, pid]
    else:
        # rotate each face so that its smallest index comes first (keeps orientation)
        shift = np.argmin(faces, axis=1)
        idx = (shift[:, None] + np.arange(3)[None, :]) % 3
        f = np.take_along_axis(faces, idx, axis=1)
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        b_first = (b < c)[:, None]
        for nu in range(num_layers - 1):
            ga, gb, gc = a + nu * n, b + nu * n, c + nu * n
            ta, tb, tc = ga + n, gb + n, gc + n
            t1 = np.where(b_first, np.stack([ga, gb, gc, tc], 1), np.stack([ga, gb, gc, tb], 1))
            t2 = np.where(b_first, np.stack([ga, gb, tc, tb], 1), np.stack([ga, gc, tc, tb], 1))
            t3 = np.stack([ga, ta, tb, tc], 1)
            pid = nu * num_faces + np.arange(num_faces)
            cells += [t1, t2, t3]
            prism_ids += [pid, pid, pid]
    cells = np.concatenate(cells)
    prism_ids = np.concatenate(prism_ids)
    order = np.argsort(prism_ids, kind="stable")
    return cells[order], prism_ids[order]


def build_foliated_mesh(layers: Sequence[np.ndarray], faces) -> FoliatedMesh:
    """Assemble a :class:`FoliatedMesh` from a stack of layer positions.

    Parameters
    ----------
    layers : sequence of (N, dim) arrays
        Layer positions, bottom first. All layers share the vertex count.
    faces : (F, dim) int array
        Shared layer connectivity. Face orientation is normalised so that
        cells come out positively oriented.

    Raises
    ------
    MeshError
        Fewer than two layers, mismatched layer sizes, degenerate faces or
        inverted prisms.
    """
    if len(layers) < 2:
        raise MeshError("a foliated mesh needs at least 2 layers")
    layers = [np.asarray(x, dtype=float) for x in layers]
    n, dim = layers[0].shape
    if dim not in (2, 3):
        raise MeshError(f"dimension must be 2 or 3, got {dim}")
    for nu, lay in enumerate(layers):
        if lay.shape != (n, dim):
            raise MeshError(f"layer {nu} has shape {lay.shape}, expected {(n, dim)}")
    faces = np.asarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != dim:
        raise MeshError(f"faces must have shape (F, {dim}), got {faces.shape}")
    if faces.min() < 0 or faces.max() >= n:
        raise MeshError("face index out of range")
    if any(len(set(f)) < dim for f in faces.tolist()):
        raise MeshError("degenerate face with repeated vertex")

    vertices = np.concatenate(layers)
    num_layers = len(layers)
    cells, prism = _split_prisms(faces, n, num_layers)
    vol = simplex_volumes(vertices, cells)
    if np.sum(vol) < 0:
        # faces were oriented against S; flip them all and redo the split
        faces = faces[:, ::-1].copy()
        cells, prism = _split_prisms(faces, n, num_layers)
        vol = simplex_volumes(vertices, cells)
    scale = np.ptp(vertices, axis=0).max() ** dim
    bad = np.flatnonzero(vol <= 1e-14 * scale)
    if bad.size:
        bad_prisms = np.unique(prism[bad])
        nf = len(faces)
        desc = ", ".join(f"{p} (layer {p // nf}, face {p % nf})" for p in bad_prisms[:10])
        raise MeshError(f"inverted or degenerate prisms: {desc}")
    return FoliatedMesh(dim, num_layers, vertices, faces, cells, prism)


@dataclass(frozen=True)
class LayerFrames:
    """Per-cell skew frames ``C = [T1 T2 n_S]`` (3D) or ``[T n_S]`` (2D).

    ``matrices`` has shape (C, dim, dim) with the frame vectors as columns.
    """

    matrices: np.ndarray

    @property
    def tangents(self) -> np.ndarray:
        return self.matrices[:, :, :-1]

    @property
    def transversal(self) -> np.ndarray:
        return self.matrices[:, :, -1]

    def __len__(self) -> int:
        return len(self.matrices)


def prism_frames(mesh: FoliatedMesh) -> np.ndarray:
    """Skew frame of every prism, shape (P, dim, dim)."""
    p = mesh.vertices[mesh.prisms()]
    d = mesh.dim
    bottom, top = p[:, :d], p[:, d:]
    s = (top - bottom).mean(axis=1)
    s_norm = np.linalg.norm(s, axis=1)
    if np.any(s_norm <= 0):
        raise MeshError(f"collapsed transverse edges in prism {int(np.argmin(s_norm))}")
    n_s = s / s_norm[:, None]
    t1 = bottom[:, 1] - bottom[:, 0]
    t1 = t1 / np.linalg.norm(t1, axis=1)[:, None]
    if d == 2:
        normal = np.stack([-t1[:, 1], t1[:, 0]], axis=1)
        frames = np.stack([t1, n_s], axis=2)
    else:
        e2 = bottom[:, 2] - bottom[:, 0]
        t2 = e2 - np.sum(e2 * t1, axis=1)[:, None] * t1
        t2 = t2 / np.linalg.norm(t2, axis=1)[:, None]
        normal = np.cross(t1, t2)
        frames = np.stack([t1, t2, n_s], axis=2)
    sin_angle = np.abs(np.sum(normal * n_s, axis=1))
    bad = np.flatnonzero(sin_angle < _MIN_TRANSVERSAL_SIN)
    if bad.size:
        raise MeshError(f"transversal field is tangent to the layer in prism(s) {bad[:10].tolist()}")
    return frames


def compute_frames(mesh: FoliatedMesh) -> LayerFrames:
    """One frame per cell, taken from the cell's generating prism.

    The tangent vectors come from Gram-Schmidt on the prism's bottom-face
    edges; the transversal direction is the normalised mean transverse edge.
    """
    frames = prism_frames(mesh)
    return LayerFrames(frames[mesh.cell_prism])


def layer_graph(mesh: FoliatedMesh, nu: int) -> sp.csr_matrix:
    """Symmetric sparse adjacency of layer ``nu`` weighted by edge length."""
    if not 0 <= nu < mesh.num_layers:
        raise IndexError(f"layer {nu} out of range [0, {mesh.num_layers})")
    edges = mesh.layer_edges()
    pts = mesh.layer(nu)
    w = np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)
    n = mesh.vertices_per_layer
    g = sp.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate(edges.T[::-1]), np.concatenate(edges.T))),
        shape=(n, n),
    )
    return g.tocsr()


def transverse_chain_length(mesh: FoliatedMesh, k, nu_a: int, nu_b: int):
    """Length of the transverse-edge chain of column ``k`` between two layers.

    ``k`` may be an int or an array of columns.
    """
    lo, hi = sorted((int(nu_a), int(nu_b)))
    if lo < 0 or hi >= mesh.num_layers:
        raise IndexError("layer index out of range")
    stack = mesh.layer_stack()
    seg = np.linalg.norm(np.diff(stack[lo:hi + 1], axis=0), axis=2)
    lengths = seg.sum(axis=0)
    out = lengths[np.asarray(k)]
    return float(out) if np.ndim(out) == 0 else out


def chain_lengths_from(mesh: FoliatedMesh, nu_ref: int) -> np.ndarray:
    """Transverse chain length from layer ``nu_ref`` to every layer, shape (L, N)."""
    stack = mesh.layer_stack()
    seg = np.linalg.norm(np.diff(stack, axis=0), axis=2)
    cum = np.concatenate([np.zeros((1, stack.shape[1])), np.cumsum(seg, axis=0)])
    return np.abs(cum - cum[nu_ref])


def boundary_facets_of_cells(cells: np.ndarray) -> np.ndarray:
    """Facets incident to exactly one cell, oriented outward.

    Assumes positively oriented cells. Returns segments (2D) or triangles (3D).
    """
    if cells.shape[1] == 3:
        local = np.array([[0, 1], [1, 2], [2, 0]])
    else:
        local = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
    facets = cells[:, local].reshape(-1, local.shape[1])
    key = np.sort(facets, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    return facets[counts[inverse] == 1]


def facet_incidence_counts(cells: np.ndarray) -> np.ndarray:
    """Number of cells sharing each distinct facet."""
    if cells.shape[1] == 3:
        local = np.array([[0, 1], [1, 2], [2, 0]])
    else:
        local = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
    key = np.sort(cells[:, local].reshape(-1, local.shape[1]), axis=1)
    _, counts = np.unique(key, axis=0, return_counts=True)
    return counts
