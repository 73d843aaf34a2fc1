"""Recovery of the force centre and height from an initial/target shape pair.

The objective is the symmetric-difference volume between the flowed initial
shape and the target; the centre is parametrised by a chart of the middle
layer so the search runs over a box.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .cg import ConvergenceError
from .chart import Chart, CenterLocation
from .discrepancy import BoundaryMesh, RasterGrid, extract_boundary, occupancy
from .elasticity import ElasticParams
from .evolution import EvolutionError, SolverOptions, evolve
from .force import ForceSpec, curved_gaussian_field, gradient_operator
from .kernel import KernelParams
from .mesh import FoliatedMesh, MeshError

_LOGGER = logging.getLogger(__name__)


@dataclass
class Evaluation:
    c_hat: tuple[float, ...]
    h: float
    J: float


@dataclass
class InverseResult:
    c_hat: tuple[float, ...]
    h: float
    J: float
    evaluations: int
    trace: list[Evaluation] = field(default_factory=list)

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate([e.J for e in self.trace])

    def to_dict(self) -> dict:
        return {"c_hat": list(self.c_hat), "h": self.h, "J": self.J, "evaluations": self.evaluations}


@dataclass
class InverseProblem:
    """Forward model plus data term for a fixed initial mesh and target.

    Parameters
    ----------
    mesh0 : FoliatedMesh
        Undeformed layered shape.
    chart : Chart
        Chart of the middle layer.
    target : BoundaryMesh
        Closed boundary of the observed final shape (no layer information).
    center_mode : {"interpolate", "snap"}
        Place the Gaussian centre at the chart point itself (barycentric on a
        middle-layer face) or at the nearest middle-layer vertex.
    grid_pad : float
        Relative padding of the fixed raster grid around both shapes; the
        grid is enlarged for an evaluation whose shape leaves it.
    """

    mesh0: FoliatedMesh
    chart: Chart
    target: BoundaryMesh
    elastic: ElasticParams = field(default_factory=ElasticParams)
    kernel: KernelParams = field(default_factory=KernelParams)
    sigma_tan: float = 0.1
    sigma_tsv: float = 0.05
    n_steps: int = 10
    resolution: int | None = None
    center_mode: str = "interpolate"
    sign: float = 1.0
    options: SolverOptions = field(default_factory=SolverOptions)
    grid_pad: float = 0.1

    def __post_init__(self):
        self.target.check_closed()
        self._facets = extract_boundary(self.mesh0).facets
        self._grid = RasterGrid.covering(
            BoundaryMesh(self.mesh0.vertices, self._facets), self.target,
            resolution=self.resolution, pad=self.grid_pad,
        )
        self._target_occ = occupancy(self.target, self._grid)
        self._unit_force: dict[CenterLocation, np.ndarray] = {}

    def center(self, c_hat) -> CenterLocation:
        return self.chart.center(c_hat, self.center_mode)

    def force_spec(self, c_hat, h: float) -> ForceSpec:
        return ForceSpec(self.center(c_hat), h, self.sigma_tan, self.sigma_tsv, self.sign,
                         tuple(float(x) for x in np.atleast_1d(c_hat)))

    def initial_force(self, c_hat, h: float) -> np.ndarray:
        loc = self.center(c_hat)
        if loc not in self._unit_force:
            spec = ForceSpec(loc, 1.0, self.sigma_tan, self.sigma_tsv, self.sign)
            g = curved_gaussian_field(self.mesh0, spec, unit=True)
            grad = (gradient_operator(self.mesh0) @ g).reshape(-1, self.mesh0.dim)
            self._unit_force[loc] = self.sign * grad
            if len(self._unit_force) > 4096:
                self._unit_force.pop(next(iter(self._unit_force)))
        return h * self._unit_force[loc]

    def simulate(self, c_hat, h: float, keep_trajectory: bool = False):
        return evolve(self.mesh0, self.initial_force(c_hat, h), self.elastic, self.kernel,
                      self.n_steps, keep_trajectory=keep_trajectory, options=self.options)

    def discrepancy(self, positions: np.ndarray) -> float:
        shape = BoundaryMesh(positions, self._facets)
        if self._grid.contains(shape):
            occ = occupancy(shape, self._grid)
            return float(np.count_nonzero(occ ^ self._target_occ)) * self._grid.cell_volume
        grid = RasterGrid.covering(shape, self.target, resolution=self._grid.resolution)
        occ = occupancy(shape, grid) ^ occupancy(self.target, grid)
        return float(np.count_nonzero(occ)) * grid.cell_volume

    def objective(self, c_hat, h: float) -> float:
        """``J(c_hat, h)``; ``inf`` when the forward flow fails."""
        if not h > 0:
            raise ValueError(f"h must be positive, got {h}")
        try:
            result = self.simulate(c_hat, h)
        except (EvolutionError, ConvergenceError, MeshError) as exc:
            _LOGGER.warning("objective infeasible at c_hat=%s h=%.4g: %s", c_hat, h, exc)
            return math.inf
        return self.discrepancy(result.final.positions)


def simulate_target(mesh0: FoliatedMesh, chart: Chart, c_hat, h: float, elastic: ElasticParams,
                    kernel: KernelParams, sigma_tan=0.1, sigma_tsv=0.05, n_steps=10,
                    center_mode="interpolate", sign=1.0,
                    options: SolverOptions = SolverOptions()) -> BoundaryMesh:
    """Boundary of the forward-simulated shape at ``(c_hat, h)``."""
    spec = ForceSpec(chart.center(c_hat, center_mode), h, sigma_tan, sigma_tsv, sign)
    res = evolve(mesh0, spec, elastic, kernel, n_steps, options=options)
    return extract_boundary(mesh0, res.final.positions)


def scan_landscape(problem: InverseProblem, c_values, h_values, progress=None) -> list[tuple]:
    """Evaluate ``J`` on the tensor grid ``c_values x h_values``.

    ``c_values`` is a 1D array (2D shapes) or a list of per-coordinate arrays.
    Returns rows ``(*c_hat, h, J)`` with ``c_hat`` varying slowest.
    """
    c_axes = [np.atleast_1d(np.asarray(c_values, float))] if problem.chart.ndim == 1 \
        else [np.asarray(a, float) for a in c_values]
    mesh = np.meshgrid(*c_axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    rows = []
    total = len(points) * len(h_values)
    for c in points:
        for h in h_values:
            rows.append((*c.tolist(), float(h), problem.objective(c, float(h))))
            if progress is not None:
                progress(len(rows), total)
    return rows


class _Budgeted:
    """Memoized objective in normalized box coordinates with a hard budget."""

    def __init__(self, problem: InverseProblem, lower, upper, budget: int):
        self.problem = problem
        self.lower = np.asarray(lower, float)
        self.upper = np.asarray(upper, float)
        self.budget = budget
        self.cache: dict[tuple, float] = {}
        self.trace: list[Evaluation] = []

    def to_box(self, z):
        return self.lower + np.clip(z, 0.0, 1.0) * (self.upper - self.lower)

    @property
    def remaining(self) -> int:
        return self.budget - len(self.trace)

    def key(self, z) -> tuple[float, float]:
        """Lexicographic score: fit first, then the weaker force."""
        x = self.to_box(z)
        return (self(z), x[-1])

    def __call__(self, z) -> float:
        z = np.clip(np.asarray(z, float), 0.0, 1.0)
        k = tuple(np.round(z, 12))
        if k in self.cache:
            return self.cache[k]
        if self.remaining <= 0:
            raise _BudgetExhausted
        x = self.to_box(z)
        val = self.problem.objective(x[:-1], float(x[-1]))
        self.cache[k] = val
        self.trace.append(Evaluation(tuple(float(v) for v in x[:-1]), float(x[-1]), val))
        return val


class _BudgetExhausted(Exception):
    pass


def nelder_mead_box(fkey, z0, step, max_evals, xatol=1e-3, spent=None):
    """Nelder-Mead on the unit box; trial points are projected into ``[0, 1]^d``.

    ``fkey`` returns a comparable score. Stops when the simplex diameter
    falls under ``xatol`` or once ``spent()`` (default: number of calls)
    reaches ``max_evals``.
    """
    d = len(z0)
    simplex = [np.clip(z0, 0, 1)]
    for i in range(d):
        v = np.array(z0, float)
        v[i] = v[i] + step if v[i] + step <= 1 else v[i] - step
        simplex.append(np.clip(v, 0, 1))
    calls = 0
    spent = spent if spent is not None else (lambda: calls)

    def f(z):
        nonlocal calls
        calls += 1
        return fkey(np.clip(z, 0, 1))

    scores = [f(v) for v in simplex]
    while spent() < max_evals:
        order = sorted(range(len(simplex)), key=lambda i: scores[i])
        simplex = [simplex[i] for i in order]
        scores = [scores[i] for i in order]
        diam = max(np.max(np.abs(v - simplex[0])) for v in simplex[1:])
        if diam < xatol:
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = np.clip(centroid + (centroid - worst), 0, 1)
        fr = f(xr)
        if fr < scores[0]:
            xe = np.clip(centroid + 2.0 * (centroid - worst), 0, 1)
            fe = f(xe)
            simplex[-1], scores[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < scores[-2]:
            simplex[-1], scores[-1] = xr, fr
        else:
            if fr < scores[-1]:
                xc = np.clip(centroid + 0.5 * (xr - centroid), 0, 1)
            else:
                xc = np.clip(centroid + 0.5 * (worst - centroid), 0, 1)
            fc = f(xc)
            if fc < min(fr, scores[-1]):
                simplex[-1], scores[-1] = xc, fc
            else:
                for i in range(1, len(simplex)):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    scores[i] = f(simplex[i])
    best = min(range(len(scores)), key=lambda i: scores[i])
    return simplex[best], scores[best]


def default_box(chart: Chart, h_expected: float = 0.3):
    lo, hi = chart.box
    h_hi = 2.0 * h_expected
    return np.append(lo, 0.01 * h_hi), np.append(hi, h_hi)


def minimize(
    problem: InverseProblem,
    box: tuple[np.ndarray, np.ndarray] | None = None,
    budget: int = 150,
    seed: int = 0,
    n_starts: int = 3,
    stage1_fraction: float = 0.4,
) -> InverseResult:
    """Space-filling scan followed by Nelder-Mead restarts from the best points.

    Stage 1 spends ``stage1_fraction`` of the budget on a Latin hypercube.
    Stage 2 runs a short Nelder-Mead from each of the ``n_starts`` best
    samples, then keeps restarting from the incumbent with halved simplex
    size until the budget is used.

    ``box`` is ``(lower, upper)`` over ``(*c_hat, h)``. Among equal objective
    values the smaller ``h`` is preferred.
    """
    if budget < 20:
        raise ValueError(f"budget must be at least 20 evaluations, got {budget}")
    lower, upper = default_box(problem.chart) if box is None else map(np.asarray, box)
    if not np.all(np.asarray(upper) > np.asarray(lower)):
        raise ValueError("box upper bounds must exceed lower bounds")
    if lower[-1] <= 0:
        raise ValueError("the h range must be strictly positive")
    fun = _Budgeted(problem, lower, upper, budget)
    d = len(lower)
    n1 = max(d + 1, int(round(stage1_fraction * budget)))
    sampler = qmc.LatinHypercube(d=d, seed=np.random.default_rng(seed))
    starts = sampler.random(n1)
    for z in starts:
        fun(z)
    scored = sorted(fun.cache.items(), key=lambda kv: (kv[1], kv[0][-1]))
    finite = [np.array(k) for k, v in scored if np.isfinite(v)]
    if not finite:
        raise RuntimeError("all stage-1 evaluations were infeasible")
    step = 0.5 * n1 ** (-1.0 / d)
    starts = finite[:n_starts]
    # equal exploration share per start, one more share kept for polishing
    share = fun.remaining // (len(starts) + 1)
    try:
        for z0 in starts:
            if share <= d:
                break
            mark = len(fun.trace)
            nelder_mead_box(fun.key, z0, step, share, spent=lambda: len(fun.trace) - mark)
        # polish from the incumbent with shrinking simplices until the budget is spent
        while fun.remaining > d + 1 and step > 1e-3:
            step *= 0.5
            incumbent = min(fun.cache.items(), key=lambda kv: (kv[1], kv[0][-1]))[0]
            mark = len(fun.trace)
            nelder_mead_box(fun.key, np.array(incumbent), step, fun.remaining,
                            spent=lambda: len(fun.trace) - mark)
    except _BudgetExhausted:
        pass
    evals = fun.trace
    best = min(evals, key=lambda e: (e.J, e.h))
    if not np.isfinite(best.J):
        raise RuntimeError("no feasible evaluation found")
    return InverseResult(best.c_hat, best.h, best.J, len(evals), list(evals))
