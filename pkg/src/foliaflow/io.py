"""File formats: mesh JSON, legacy VTK, CSV tables and key = value configs."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .chart import Chart, default_chart
from .mesh import FoliatedMesh, build_foliated_mesh

_VTK_CELL_TYPE = {3: 5, 4: 10}  # triangle, tetrahedron


def mesh_to_dict(mesh: FoliatedMesh, chart: Chart | None = None) -> dict:
    data = {
        "dim": mesh.dim,
        "num_layers": mesh.num_layers,
        "vertices_per_layer": mesh.vertices_per_layer,
        "layers": mesh.vertices.tolist(),
        "faces": mesh.faces.tolist(),
    }
    if chart is not None:
        data["chart"] = {"layer": chart.layer, "params": chart.params.tolist()}
    return data


def write_mesh_json(path: str | Path, mesh: FoliatedMesh, chart: Chart | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh, chart), fh)


def read_mesh_json(path: str | Path) -> tuple[FoliatedMesh, Chart]:
    """Load a mesh (and its chart if stored; otherwise a default chart).

    ``layers`` may be a flat layer-major list of points or a list of layers.
    """
    with open(path) as fh:
        data = json.load(fh)
    return mesh_from_dict(data)


def mesh_from_dict(data: Mapping) -> tuple[FoliatedMesh, Chart]:
    for key in ("dim", "num_layers", "layers", "faces"):
        if key not in data:
            raise ValueError(f"mesh file is missing field {key!r}")
    pts = np.asarray(data["layers"], dtype=float)
    dim, num_layers = int(data["dim"]), int(data["num_layers"])
    if pts.ndim == 3:
        layers = list(pts)
    else:
        n = int(data.get("vertices_per_layer", len(pts) // num_layers))
        if pts.shape != (n * num_layers, dim):
            raise ValueError(
                f"expected {n * num_layers} points of dimension {dim}, got array {pts.shape}"
            )
        layers = list(pts.reshape(num_layers, n, dim))
    mesh = build_foliated_mesh(layers, data["faces"])
    if "chart" in data:
        ch = data["chart"]
        chart = Chart(np.asarray(ch["params"], dtype=float).reshape(mesh.vertices_per_layer, -1),
                      mesh.faces.copy(), int(ch.get("layer", mesh.middle_layer)))
    else:
        chart = default_chart(mesh)
    return mesh, chart


def write_vtk(
    path: str | Path,
    points: np.ndarray,
    cells: np.ndarray,
    point_data: Mapping[str, np.ndarray] | None = None,
    title: str = "foliaflow",
) -> None:
    """Legacy ASCII VTK unstructured grid with optional per-vertex data.

    2D points are written with ``z = 0`` and 2-vectors padded likewise.
    """
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    n = len(points)
    if points.shape[1] == 2:
        points = np.column_stack([points, np.zeros(n)])
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {n} double")
    lines += [" ".join(f"{v:.17g}" for v in p) for p in points]
    k = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (k + 1)}")
    lines += [f"{k} " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(_VTK_CELL_TYPE[k])] * len(cells)
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in values]
            else:
                if values.shape[1] == 2:
                    values = np.column_stack([values, np.zeros(n)])
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(f"{v:.17g}" for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_points(path: str | Path) -> np.ndarray:
    """Points block of a legacy ASCII VTK file (used for round-trip checks)."""
    tokens = Path(path).read_text().split("\n")
    for i, line in enumerate(tokens):
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            return np.array([[float(v) for v in row.split()] for row in tokens[i + 1:i + 1 + n]])
    raise ValueError(f"no POINTS section in {path}")


def write_csv(path: str | Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def format_config(values: Mapping[str, object]) -> str:
    lines = []
    for key, value in values.items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
