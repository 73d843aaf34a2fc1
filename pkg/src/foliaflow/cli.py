"""Command-line entry point.

Every subcommand reads an optional ``key = value`` config file, applies
flag overrides, echoes the resolved config into the output directory and
writes its results there. Exit codes: 0 success, 1 numerical failure,
2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cg import ConvergenceError
from .chart import Chart
from .discrepancy import BoundaryError, extract_boundary
from .elasticity import ElasticParams
from .evolution import EvolutionError, SolverOptions, evolve
from .experiments import MODULI_HEADER, apex_c_hat, compare_moduli
from .force import ForceSpec, curved_gaussian_field
from .inverse import InverseProblem, minimize, scan_landscape, simulate_target
from .io import format_config, parse_config, read_mesh_json, write_csv, write_mesh_json, write_vtk
from .kernel import KernelParams
from .mesh import FoliatedMesh, MeshError
from .plotting import (forward_figure, landscape_figure, moduli_figure, save_figure_safely,
                       trace_figure)
from .shapes import KINDS, ShapeRecipe, generate

# truth values of the simulated inverse experiments, per shape
DEFAULT_TRUTH = {"cap2d": ((1.0,), 0.3), "fold2d": ((2.2,), 0.3), "cortex3d": ((1.6, 0.5), 0.3)}
# the 3D sheet needs softer moduli for a force of height ~0.3 to move it visibly
DEFAULT_MODULI = {"cap2d": (1.0, 3.0, 3.0), "fold2d": (1.0, 3.0, 3.0), "cortex3d": (0.1, 0.3, 0.3)}


class UsageError(Exception):
    """Invalid configuration or unreadable input (exit code 2)."""


@dataclass
class ExperimentConfig:
    """All knobs of a run. ``None`` means a shape- or command-dependent default."""

    shape: str = "cap2d"
    mesh: str | None = None
    shape_resolution: tuple | None = None
    num_layers: int | None = None
    sigma_v: float = 0.01
    delta: float = 1e-6
    lambda_tan: float | None = None
    lambda_tsv: float | None = None
    lambda_ang: float | None = None
    mu_tan: float | None = None
    h: float | None = None
    c_hat: tuple | None = None
    sigma_tan: float = 0.1
    sigma_tsv: float = 0.05
    sign: float = 1.0
    steps: int = 10
    resolution: int | None = None
    budget: int = 150
    seed: int = 0
    out: str = "foliaflow-out"
    center_mode: str = "interpolate"
    preconditioner: str = "jacobi"
    cg_tol: float = 1e-8
    target: str | None = None
    truth_c_hat: tuple | None = None
    truth_h: float | None = None
    h_min: float = 0.01
    h_max: float = 0.7
    scan_c_points: int = 21
    scan_h_points: int = 11
    scan_h_min: float = 0.05
    scan_h_max: float = 0.55
    figures: bool = True

    def validate(self):
        if self.mesh is None and self.shape not in KINDS:
            raise UsageError(f"unknown shape {self.shape!r}; expected one of {KINDS}")
        for name in ("sigma_v", "delta", "sigma_tan", "sigma_tsv", "cg_tol", "h_max",
                     "scan_h_max"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda_tan", "lambda_tsv", "lambda_ang", "mu_tan", "h", "resolution",
                     "truth_h"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise UsageError(f"{name} must be positive, got {value}")
        for name in ("steps", "budget", "scan_c_points", "scan_h_points"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not 0 < self.h_min < self.h_max:
            raise UsageError(f"need 0 < h_min < h_max, got {self.h_min}, {self.h_max}")
        if not 0 < self.scan_h_min < self.scan_h_max:
            raise UsageError("need 0 < scan_h_min < scan_h_max")
        if self.center_mode not in ("interpolate", "snap"):
            raise UsageError(f"center_mode must be 'interpolate' or 'snap', got {self.center_mode!r}")
        if self.preconditioner not in ("jacobi", "elastic"):
            raise UsageError(f"preconditioner must be 'jacobi' or 'elastic', got {self.preconditioner!r}")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must fit in 64 bits")

    def moduli(self, kind: str) -> ElasticParams:
        base = DEFAULT_MODULI.get(kind, DEFAULT_MODULI["cap2d"])
        lt, ls, la = (base[i] if v is None else v
                      for i, v in enumerate((self.lambda_tan, self.lambda_tsv, self.lambda_ang)))
        return ElasticParams(lt, ls, la, mu_tan=self.mu_tan, delta=self.delta)

    def kernel(self) -> KernelParams:
        return KernelParams(sigma_v=self.sigma_v)

    def solver(self) -> SolverOptions:
        return SolverOptions(cg_tol=self.cg_tol, preconditioner=self.preconditioner)


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _to_tuple(text: str) -> tuple:
    parts = [p for p in str(text).replace(",", " ").split() if p]
    return tuple(float(p) if "." in p or "e" in p.lower() else int(p) for p in parts)


_CONVERTERS = {"float": float, "int": int, "str": str, "bool": _to_bool, "tuple": _to_tuple}


def _converter(f: dataclasses.Field):
    base = str(f.type).split("|")[0].strip()
    return _CONVERTERS[base]


def coerce(key: str, value):
    """Convert a raw config/flag value for field ``key``."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if key not in fields:
        raise UsageError(f"unknown config key {key!r}")
    if value is None or (isinstance(value, str) and value.strip().lower() == "none"):
        return None
    try:
        return _converter(fields[key])(value) if isinstance(value, str) else value
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {exc}") from None


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {p}")
        try:
            raw = parse_config(p.read_text())
        except ValueError as exc:
            raise UsageError(f"{p}: {exc}") from None
        values.update({k: coerce(k, v) for k, v in raw.items()})
    values.update({k: coerce(k, v) for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_shape(cfg: ExperimentConfig) -> tuple[FoliatedMesh, Chart, str]:
    """Mesh, chart and a shape kind (``custom`` for mesh files)."""
    if cfg.mesh is not None:
        p = Path(cfg.mesh)
        if not p.is_file():
            raise UsageError(f"mesh file not found: {p}")
        try:
            mesh, chart = read_mesh_json(p)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read mesh {p}: {exc}") from None
        return mesh, chart, "custom"
    res = cfg.shape_resolution
    if res is not None:
        res = int(res[0]) if len(res) == 1 else tuple(int(r) for r in res)
    mesh, chart = generate(ShapeRecipe(cfg.shape, res, cfg.num_layers))
    return mesh, chart, cfg.shape


def _prepare_out(cfg: ExperimentConfig, command: str) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        record = {"command": command, "version": __version__, **dataclasses.asdict(cfg)}
        (out / "config.txt").write_text(format_config(record))
    except OSError as exc:
        raise UsageError(f"cannot write to output directory {out}: {exc}") from None
    return out


def _center(cfg: ExperimentConfig, mesh, chart) -> np.ndarray:
    if cfg.c_hat is not None:
        c = np.asarray(cfg.c_hat, float)
        if c.shape != (chart.ndim,):
            raise UsageError(f"c_hat needs {chart.ndim} coordinate(s), got {len(c)}")
        return c
    return apex_c_hat(mesh, chart)


def cmd_generate(cfg: ExperimentConfig) -> int:
    mesh, chart, kind = load_shape(cfg)
    out = _prepare_out(cfg, "generate")
    write_mesh_json(out / f"{kind}.json", mesh, chart)
    write_vtk(out / f"{kind}.vtk", mesh.vertices, mesh.cells)
    print(f"{kind}: {mesh.num_layers} layers x {mesh.vertices_per_layer} vertices -> {out}")
    return 0


def cmd_forward(cfg: ExperimentConfig) -> int:
    mesh, chart, kind = load_shape(cfg)
    out = _prepare_out(cfg, "forward")
    c = _center(cfg, mesh, chart)
    h = 3.0 if cfg.h is None else cfg.h
    spec = ForceSpec(chart.center(c, cfg.center_mode), h, cfg.sigma_tan, cfg.sigma_tsv, cfg.sign,
                     tuple(c.tolist()))
    g = curved_gaussian_field(mesh, spec)
    res = evolve(mesh, spec, cfg.moduli(kind), cfg.kernel(), cfg.steps, keep_trajectory=True,
                 options=cfg.solver())
    width = len(str(cfg.steps))
    for i, state in enumerate(res.trajectory):
        write_vtk(out / f"snapshot_{i:0{width}d}.vtk", state.positions, mesh.cells, {
            "g": g,
            "det_jacobian": np.linalg.det(state.jacobians),
            "displacement": state.positions - mesh.vertices,
        }, title=f"t = {state.t:.6g}")
    write_csv(out / "diagnostics.csv",
              ("step", "t", "min_det", "cg_iterations", "max_displacement"),
              [dataclasses.astuple(d) for d in res.diagnostics])
    np.savetxt(out / "final_positions.csv", res.final.positions, delimiter=",")
    if cfg.figures:
        save_figure_safely(forward_figure, out / "forward.png", mesh, res.final.positions, g)
    last = res.diagnostics[-1]
    print(f"forward: {cfg.steps} steps, min det {min(d.min_det for d in res.diagnostics):.4f}, "
          f"max displacement {last.max_displacement:.4g} -> {out}")
    return 0


def cmd_moduli(cfg: ExperimentConfig) -> int:
    mesh, chart, _ = load_shape(cfg)
    out = _prepare_out(cfg, "moduli")
    c = _center(cfg, mesh, chart)
    h = 3.0 if cfg.h is None else cfg.h
    spec = ForceSpec(chart.center(c, cfg.center_mode), h, cfg.sigma_tan, cfg.sigma_tsv, cfg.sign)
    cases = compare_moduli(mesh, spec, kernel=cfg.kernel(), n_steps=cfg.steps, delta=cfg.delta,
                           options=cfg.solver())
    write_csv(out / "moduli.csv", MODULI_HEADER, [case.row() for case in cases])
    for case in cases:
        write_vtk(out / f"{case.name}.vtk", case.result.final.positions, mesh.cells,
                  {"displacement": case.result.final.positions - mesh.vertices})
    if cfg.figures and mesh.dim == 2:
        save_figure_safely(moduli_figure, out / "moduli.png", mesh, cases)
    for case in cases:
        print(f"{case.name:16s} tangential {case.mean_tangential:.4g}  transversal "
              f"{case.mean_transversal:.4g}  ratio {case.ratio:.3f}  total {case.total:.4g}")
    return 0


def _problem(cfg: ExperimentConfig, mesh, chart, kind) -> tuple[InverseProblem, dict]:
    elastic = cfg.moduli(kind)
    info = {}
    if cfg.target is not None:
        p = Path(cfg.target)
        if not p.is_file():
            raise UsageError(f"target mesh file not found: {p}")
        try:
            tmesh, _ = read_mesh_json(p)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read target {p}: {exc}") from None
        target = extract_boundary(tmesh)
        info["target"] = str(p)
    else:
        c_truth, h_truth = DEFAULT_TRUTH.get(kind, (None, 0.3))
        if cfg.truth_c_hat is not None:
            c_truth = cfg.truth_c_hat
        if cfg.truth_h is not None:
            h_truth = cfg.truth_h
        if c_truth is None:
            raise UsageError("a mesh file needs either target or truth_c_hat")
        c_truth = tuple(float(v) for v in c_truth)
        if len(c_truth) != chart.ndim:
            raise UsageError(f"truth_c_hat needs {chart.ndim} coordinate(s)")
        target = simulate_target(mesh, chart, c_truth, h_truth, elastic, cfg.kernel(),
                                 cfg.sigma_tan, cfg.sigma_tsv, cfg.steps, cfg.center_mode,
                                 cfg.sign, cfg.solver())
        info.update(truth_c_hat=list(c_truth), truth_h=h_truth)
    problem = InverseProblem(mesh, chart, target, elastic, cfg.kernel(), cfg.sigma_tan,
                             cfg.sigma_tsv, cfg.steps, cfg.resolution, cfg.center_mode, cfg.sign,
                             cfg.solver())
    return problem, info


def _progress(done: int, total: int):
    if done == total or done % max(1, total // 20) == 0:
        print(f"  {done}/{total} evaluations", file=sys.stderr, flush=True)


def cmd_scan(cfg: ExperimentConfig) -> int:
    mesh, chart, kind = load_shape(cfg)
    out = _prepare_out(cfg, "scan")
    problem, info = _problem(cfg, mesh, chart, kind)
    lo, hi = chart.box
    c_axes = [np.linspace(lo[i], hi[i], cfg.scan_c_points) for i in range(chart.ndim)]
    h_values = np.linspace(cfg.scan_h_min, cfg.scan_h_max, cfg.scan_h_points)
    rows = scan_landscape(problem, c_axes[0] if chart.ndim == 1 else c_axes, h_values, _progress)
    names = ["c_hat"] if chart.ndim == 1 else [f"c_hat{i + 1}" for i in range(chart.ndim)]
    write_csv(out / "landscape.csv", (*names, "h", "J"), rows)
    best = min(rows, key=lambda r: (r[-1], r[-2]))
    summary = {"argmin_c_hat": list(best[:-2]), "argmin_h": best[-2], "J": best[-1], **info}
    (out / "scan.json").write_text(json.dumps(summary, indent=2))
    if cfg.figures and chart.ndim == 1:
        truth = None
        if "truth_c_hat" in info:
            truth = (info["truth_c_hat"][0], info["truth_h"])
        save_figure_safely(landscape_figure, out / "landscape.png", rows, truth)
    print(f"scan: grid argmin c_hat={np.round(best[:-2], 4).tolist()} h={best[-2]:.4g} "
          f"J={best[-1]:.4g} -> {out}")
    return 0


def cmd_invert(cfg: ExperimentConfig) -> int:
    if cfg.budget < 20:
        raise UsageError(f"invert needs a budget of at least 20 evaluations, got {cfg.budget}")
    mesh, chart, kind = load_shape(cfg)
    out = _prepare_out(cfg, "invert")
    problem, info = _problem(cfg, mesh, chart, kind)
    lo, hi = chart.box
    box = (np.append(lo, cfg.h_min), np.append(hi, cfg.h_max))
    t0 = time.perf_counter()
    result = minimize(problem, box, budget=cfg.budget, seed=cfg.seed)
    elapsed = time.perf_counter() - t0
    record = {**result.to_dict(), "seed": cfg.seed, "seconds": elapsed, **info}
    (out / "result.json").write_text(json.dumps(record, indent=2))
    names = ["c_hat"] if chart.ndim == 1 else [f"c_hat{i + 1}" for i in range(chart.ndim)]
    write_csv(out / "trace.csv", ("evaluation", *names, "h", "J"),
              [(i, *e.c_hat, e.h, e.J) for i, e in enumerate(result.trace)])
    if cfg.figures:
        save_figure_safely(trace_figure, out / "trace.png", result)
    print(f"invert: c_hat={np.round(result.c_hat, 4).tolist()} h={result.h:.4f} "
          f"J={result.J:.4g} after {result.evaluations} evaluations ({elapsed:.0f} s) -> {out}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "forward": cmd_forward,
    "moduli": cmd_moduli,
    "scan": cmd_scan,
    "invert": cmd_invert,
}

# flag name -> config key for per-parameter overrides
_FLAGS = {
    "--config": None, "--out": "out", "--seed": "seed", "--steps": "steps",
    "--resolution": "resolution", "--budget": "budget", "--shape": "shape", "--mesh": "mesh",
    "--target": "target", "--sigma-v": "sigma_v", "--delta": "delta",
    "--lambda-tan": "lambda_tan", "--lambda-tsv": "lambda_tsv", "--lambda-ang": "lambda_ang",
    "--mu-tan": "mu_tan", "--h": "h", "--c-hat": "c_hat", "--sigma-tan": "sigma_tan",
    "--sigma-tsv": "sigma_tsv", "--truth-c-hat": "truth_c_hat", "--truth-h": "truth_h",
    "--center-mode": "center_mode", "--preconditioner": "preconditioner",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foliaflow", description="Elastic growth of layered shapes: simulate and invert.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "write a synthetic shape as mesh JSON and VTK",
        "forward": "flow a shape under one force and write VTK snapshots",
        "moduli": "compare the three reference moduli triples on one force",
        "scan": "tabulate the objective on a (c_hat, h) grid",
        "invert": "recover (c_hat, h) from a target shape",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        for flag, key in _FLAGS.items():
            if key is None:
                continue
            metavar = "X1,X2" if key in ("c_hat", "truth_c_hat") else None
            p.add_argument(flag, dest=key, metavar=metavar, default=None,
                           help=f"override config key {key}")
        p.add_argument("--no-figures", dest="figures", action="store_const", const="false",
                       default=None, help="skip PNG rendering")
        p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose") and v is not None}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EvolutionError, ConvergenceError, MeshError, BoundaryError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
