"""Synthetic layered test shapes: a 2D cap, a 2D fold and a 3D folded sheet."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chart import Chart, arc_length_chart
from .mesh import FoliatedMesh, MeshError, build_foliated_mesh

KINDS = ("cap2d", "fold2d", "cortex3d")

_DEFAULTS = {
    "cap2d": dict(resolution=64, num_layers=5, inner_radius=0.5, thickness=0.2),
    "fold2d": dict(resolution=121, num_layers=5, width=3.6, amplitude=0.3, periods=3.0,
                   thickness=0.2),
    "cortex3d": dict(resolution=(17, 13), num_layers=3, u_range=(1.1, 2.7), v_range=(0.0, 1.2),
                     amplitude=0.3, frequency=np.pi, thickness=0.2),
}


@dataclass
class ShapeRecipe:
    """Which shape to build and how finely.

    Unset geometric parameters take the per-kind defaults in ``_DEFAULTS``.
    """

    kind: str = "cap2d"
    resolution: int | tuple[int, int] | None = None
    num_layers: int | None = None
    geometry: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {KINDS}")
        opts = dict(_DEFAULTS[self.kind])
        opts.update(self.geometry)
        if self.resolution is not None:
            opts["resolution"] = self.resolution
        if self.num_layers is not None:
            opts["num_layers"] = self.num_layers
        return opts


def generate(recipe: ShapeRecipe) -> tuple[FoliatedMesh, Chart]:
    opts = recipe.resolved()
    builder = {"cap2d": cap2d, "fold2d": fold2d, "cortex3d": cortex3d}[recipe.kind]
    return builder(**opts)


def _check_args(n_min: int, resolution, num_layers: int):
    if np.min(resolution) < n_min:
        raise ValueError(f"need at least {n_min} vertices per layer (axis), got {resolution}")
    if num_layers < 3:
        raise ValueError(f"need at least 3 layers, got {num_layers}")


def cap2d(resolution=64, num_layers=5, inner_radius=0.5, thickness=0.2):
    """Half annulus made of concentric arcs; vertex 0 is the leftmost point."""
    _check_args(5, resolution, num_layers)
    theta = np.linspace(np.pi, 0.0, resolution)
    radii = inner_radius + thickness * np.linspace(0.0, 1.0, num_layers)
    layers = [r * np.stack([np.cos(theta), np.sin(theta)], axis=1) for r in radii]
    faces = np.stack([np.arange(resolution - 1), np.arange(1, resolution)], axis=1)
    mesh = build_foliated_mesh(layers, faces)
    return mesh, arc_length_chart(mesh)


def _arclength_resample(x, y, n):
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
    t = np.linspace(0.0, s[-1], n)
    return np.interp(t, s, x), np.interp(t, s, y)


def fold2d(resolution=121, num_layers=5, width=3.6, amplitude=0.3, periods=3.0, thickness=0.2):
    """Sinusoidal band, layers offset from the middle curve along its normal."""
    _check_args(5, resolution, num_layers)
    omega = 2 * np.pi * periods / width
    xd = np.linspace(0.0, width, 20 * resolution)
    x, y = _arclength_resample(xd, amplitude * np.sin(omega * xd), resolution)
    slope = amplitude * omega * np.cos(omega * x)
    normal = np.stack([-slope, np.ones_like(slope)], axis=1) / np.sqrt(1 + slope**2)[:, None]
    max_curv = amplitude * omega**2
    half = 0.5 * thickness
    if half * max_curv >= 1.0:
        raise MeshError(
            f"layers self-intersect: offset {half:.3g} exceeds the curvature radius "
            f"{1 / max_curv:.3g} (max allowed thickness {2 / max_curv:.3g})"
        )
    mid = np.stack([x, y], axis=1)
    offsets = np.linspace(-half, half, num_layers)
    layers = [mid + o * normal for o in offsets]
    faces = np.stack([np.arange(resolution - 1), np.arange(1, resolution)], axis=1)
    mesh = build_foliated_mesh(layers, faces)
    return mesh, arc_length_chart(mesh)


def grid_faces(nu: int, nv: int) -> np.ndarray:
    """Triangulate an ``nu x nv`` vertex grid (index ``i * nv + j``), CCW in (u, v)."""
    i, j = np.meshgrid(np.arange(nu - 1), np.arange(nv - 1), indexing="ij")
    a = (i * nv + j).ravel()
    b = a + nv
    c = a + nv + 1
    d = a + 1
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def cortex3d(resolution=(17, 13), num_layers=3, u_range=(1.1, 2.7), v_range=(0.0, 1.2),
             amplitude=0.3, frequency=np.pi, thickness=0.2):
    """Folded height-field sheet ``z = a sin(w u) cos(w v)`` extruded along its normals.

    The chart coordinates of the middle layer are the generator parameters
    ``(u, v)``.
    """
    nu, nv = (resolution, resolution) if np.isscalar(resolution) else resolution
    _check_args(5, (nu, nv), num_layers)
    u, v = np.meshgrid(np.linspace(*u_range, nu), np.linspace(*v_range, nv), indexing="ij")
    u, v = u.ravel(), v.ravel()
    a, w = amplitude, frequency
    z = a * np.sin(w * u) * np.cos(w * v)
    zu = a * w * np.cos(w * u) * np.cos(w * v)
    zv = -a * w * np.sin(w * u) * np.sin(w * v)
    normal = np.stack([-zu, -zv, np.ones_like(z)], axis=1)
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    # principal curvatures of a graph are bounded by the Hessian norm
    max_curv = a * w**2
    half = 0.5 * thickness
    if half * max_curv >= 1.0:
        raise MeshError(
            f"layers self-intersect: offset {half:.3g} exceeds the curvature radius "
            f"{1 / max_curv:.3g} (max allowed thickness {2 / max_curv:.3g})"
        )
    mid = np.stack([u, v, z], axis=1)
    offsets = np.linspace(-half, half, num_layers)
    layers = [mid + o * normal for o in offsets]
    faces = grid_faces(nu, nv)
    mesh = build_foliated_mesh(layers, faces)
    chart = Chart(np.stack([u, v], axis=1), mesh.faces.copy(), mesh.middle_layer)
    return mesh, chart
