"""Flat coordinates for force centres on the middle layer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import FoliatedMesh


@dataclass(frozen=True)
class CenterLocation:
    """A point on a layer given by barycentric weights over one layer face.

    ``columns`` are vertex column indices; ``weights`` sum to one. A vertex
    centre is a single column with weight 1.
    """

    layer: int
    columns: tuple[int, ...]
    weights: tuple[float, ...]

    @classmethod
    def at_vertex(cls, layer: int, column: int) -> "CenterLocation":
        return cls(int(layer), (int(column),), (1.0,))

    def position(self, mesh: FoliatedMesh, layer: int | None = None) -> np.ndarray:
        pts = mesh.layer(self.layer if layer is None else layer)[list(self.columns)]
        return np.asarray(self.weights) @ pts

    def nearest_column(self) -> int:
        return self.columns[int(np.argmax(self.weights))]


@dataclass(frozen=True)
class Chart:
    """Chart of the middle layer.

    ``params`` holds the chart coordinates of every vertex column, shape
    (N, dim - 1): arc length from the leftmost vertex in 2D, generator
    parameters ``(u, v)`` in 3D. ``faces`` is the layer connectivity.
    """

    params: np.ndarray
    faces: np.ndarray
    layer: int

    @property
    def ndim(self) -> int:
        return self.params.shape[1]

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.params.min(axis=0), self.params.max(axis=0)

    def clip(self, c_hat) -> np.ndarray:
        lo, hi = self.box
        return np.clip(np.atleast_1d(np.asarray(c_hat, dtype=float)), lo, hi)

    def locate(self, c_hat) -> CenterLocation:
        """Face and barycentric weights of the chart point ``c_hat``."""
        c = self.clip(c_hat)
        p = self.params[self.faces]  # (F, dim, m)
        if self.ndim == 1:
            s0, s1 = p[:, 0, 0], p[:, 1, 0]
            length = s1 - s0
            t = (c[0] - s0) / length
            inside = np.minimum(t, 1 - t)
            f = int(np.argmax(inside))
            w = (1.0 - t[f], t[f])
        else:
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            d = c - p[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            b1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
            b2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
            bary = np.stack([1 - b1 - b2, b1, b2], axis=1)
            f = int(np.argmax(bary.min(axis=1)))
            w = tuple(np.clip(bary[f], 0.0, 1.0) / np.clip(bary[f], 0.0, 1.0).sum())
        cols = tuple(int(x) for x in self.faces[f])
        weights = tuple(float(x) for x in w)
        return CenterLocation(self.layer, cols, weights)

    def snap(self, c_hat) -> CenterLocation:
        """Nearest middle-layer vertex to ``c_hat``."""
        c = self.clip(c_hat)
        k = int(np.argmin(np.linalg.norm(self.params - c, axis=1)))
        return CenterLocation.at_vertex(self.layer, k)

    def center(self, c_hat, mode: str = "interpolate") -> CenterLocation:
        if mode == "interpolate":
            return self.locate(c_hat)
        if mode == "snap":
            return self.snap(c_hat)
        raise ValueError(f"unknown center mode {mode!r}")

    def coordinates_of(self, column: int) -> np.ndarray:
        return self.params[column].copy()

    def invert(self, point: np.ndarray, mesh: FoliatedMesh) -> np.ndarray:
        """Chart coordinates of the middle-layer vertex nearest to ``point``."""
        k = int(np.argmin(np.linalg.norm(mesh.layer(self.layer) - point, axis=1)))
        return self.coordinates_of(k)

    def spacing(self) -> float:
        """Largest edge length of the layer in chart coordinates."""
        p = self.params[self.faces]
        if self.ndim == 1:
            return float(np.abs(p[:, 1, 0] - p[:, 0, 0]).max())
        e = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.linalg.norm(e, axis=1).max())


def arc_length_chart(mesh: FoliatedMesh, layer: int | None = None) -> Chart:
    """Arc-length chart of a 2D polyline layer, measured from its leftmost end.

    The layer polyline must be a simple chain (faces ``(k, k+1)`` in order
    or any chain that can be walked end to end).
    """
    if mesh.dim != 2:
        raise ValueError("arc-length charts are for 2D meshes")
    layer = mesh.middle_layer if layer is None else layer
    order = _chain_order(mesh.faces, mesh.vertices_per_layer)
    pts = mesh.layer(layer)[order]
    if pts[-1, 0] < pts[0, 0]:
        order = order[::-1]
        pts = pts[::-1]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    params = np.empty((mesh.vertices_per_layer, 1))
    params[order, 0] = s
    return Chart(params, mesh.faces.copy(), layer)


def _chain_order(faces: np.ndarray, n: int) -> np.ndarray:
    nbrs: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in faces.tolist():
        nbrs[a].append(b)
        nbrs[b].append(a)
    ends = [k for k, v in nbrs.items() if len(v) == 1]
    if len(ends) != 2 or any(len(v) > 2 for v in nbrs.values()):
        raise ValueError("layer polyline is not a simple open chain")
    order = [ends[0]]
    prev = -1
    while len(order) < n:
        cur = order[-1]
        nxt = [x for x in nbrs[cur] if x != prev]
        prev = cur
        order.append(nxt[0])
    return np.array(order)


def planar_chart(mesh: FoliatedMesh, layer: int | None = None) -> Chart:
    """Chart of a 3D layer by its ``(x, y)`` projection (height-field layers)."""
    if mesh.dim != 3:
        raise ValueError("planar charts are for 3D meshes")
    layer = mesh.middle_layer if layer is None else layer
    return Chart(mesh.layer(layer)[:, :2].copy(), mesh.faces.copy(), layer)


def default_chart(mesh: FoliatedMesh) -> Chart:
    return arc_length_chart(mesh) if mesh.dim == 2 else planar_chart(mesh)
