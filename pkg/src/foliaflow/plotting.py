"""Report figures rendered to files with the Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
import numpy as np  # noqa: E402

from .mesh import FoliatedMesh  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.linewidth": 0.8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def draw_layers(ax, mesh: FoliatedMesh, positions=None, color="k", values=None, **kw):
    """Draw every layer of a 2D mesh as a polyline; optionally colour vertices by ``values``."""
    pts = mesh.vertices if positions is None else np.asarray(positions)
    n = mesh.vertices_per_layer
    segs = [pts[nu * n:(nu + 1) * n][mesh.faces] for nu in range(mesh.num_layers)]
    ax.add_collection(LineCollection(np.concatenate(segs), colors=color, linewidths=kw.get("lw", 0.7),
                                     linestyles=kw.get("ls", "-"), alpha=kw.get("alpha", 1.0)))
    ax.autoscale_view()
    if values is not None:
        sc = ax.scatter(pts[:, 0], pts[:, 1], c=values, s=6, cmap="coolwarm", zorder=3)
        return sc
    return None


def forward_figure(path, mesh0: FoliatedMesh, final_positions, g_values=None):
    """Undeformed (dashed) and deformed layers; 3D meshes show the middle layer as scatter."""
    with plt.rc_context(_STYLE):
        if mesh0.dim == 2:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            draw_layers(ax, mesh0, color="0.6", ls="--")
            sc = draw_layers(ax, mesh0, final_positions, values=g_values)
            if sc is not None:
                fig.colorbar(sc, ax=ax, label="g")
            ax.set_aspect("equal")
        else:
            fig = plt.figure(figsize=(5, 4))
            ax = fig.add_subplot(projection="3d")
            top = mesh0.layer(mesh0.num_layers - 1)
            moved = np.asarray(final_positions)[-mesh0.vertices_per_layer:]
            ax.scatter(*top.T, s=2, color="0.6")
            ax.scatter(*moved.T, s=3, c=np.linalg.norm(moved - top, axis=1), cmap="viridis")
        ax.set_title("deformed shape (dashed: initial)")
        fig.savefig(path)
        plt.close(fig)


def moduli_figure(path, mesh0: FoliatedMesh, cases):
    """One panel per moduli case over the shared undeformed shape (2D only)."""
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(cases), figsize=(4 * len(cases), 3), sharey=True)
        for ax, case in zip(np.atleast_1d(axes), cases):
            draw_layers(ax, mesh0, color="0.6", ls="--")
            disp = np.linalg.norm(case.result.final.positions - mesh0.vertices, axis=1)
            draw_layers(ax, mesh0, case.result.final.positions, values=disp)
            e = case.elastic
            ax.set_title(f"{case.name} ({e.lambda_tan:g}, {e.lambda_tsv:g}, {e.lambda_ang:g})")
            ax.set_aspect("equal")
        fig.savefig(path)
        plt.close(fig)


def landscape_figure(path, rows, truth=None, levels=20):
    """Level curves of ``J`` over ``(c_hat, h)`` for a 1D chart."""
    arr = np.asarray(rows, dtype=float)
    c = np.unique(arr[:, 0])
    h = np.unique(arr[:, 1])
    J = arr[:, 2].reshape(len(c), len(h))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        finite = np.where(np.isfinite(J), J, np.nan)
        cs = ax.contourf(c, h, finite.T, levels=levels, cmap="viridis")
        ax.contour(c, h, finite.T, levels=levels, colors="k", linewidths=0.3)
        fig.colorbar(cs, ax=ax, label="J")
        i, j = np.unravel_index(np.nanargmin(finite), finite.shape)
        ax.plot(c[i], h[j], "w+", ms=10, label="grid argmin")
        if truth is not None:
            ax.plot(*truth, "rx", ms=8, label="truth")
        ax.set_xlabel(r"$\hat c$")
        ax.set_ylabel("h")
        ax.legend(loc="upper right", fontsize=7)
        fig.savefig(path)
        plt.close(fig)


def trace_figure(path, result):
    """Objective per evaluation and the running best."""
    J = np.array([e.J for e in result.trace])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        ax.plot(np.where(np.isfinite(J), J, np.nan), ".", ms=3, color="0.5", label="J")
        ax.plot(result.best_so_far(), "-", color="C0", label="best so far")
        ax.set_xlabel("evaluation")
        ax.set_ylabel("J")
        ax.legend(fontsize=7)
        fig.savefig(path)
        plt.close(fig)


def save_figure_safely(fn, path, *args, **kwargs) -> Path | None:
    """Render a figure; report but do not raise on plotting failures."""
    try:
        fn(path, *args, **kwargs)
    except (ValueError, RuntimeError) as exc:
        print(f"warning: could not render {path}: {exc}")
        return None
    return Path(path)
