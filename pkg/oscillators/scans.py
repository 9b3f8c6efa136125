"""
Bifurcation diagrams reconstructed by grid scans.

Each cell is surveyed independently. Hopf points are refined by bisection on
the sign of the equilibrium's leading real part, folds of cycles by bisection
on whether the vanishing cycle can still be converged onto. The generalized
Hopf point is where the first Lyapunov coefficient changes sign along the
Hopf curve.
"""

import logging
from dataclasses import dataclass, field
from functools import partial
from itertools import pairwise

import numpy as np
from scipy.optimize import bisect

from birhythm.exceptions import (
    Ambiguous,
    ConvergedToEquilibrium,
    DomainEscape,
    NoConvergence,
    NotPeriodic,
    NumericalError,
)
from birhythm.export import write_csv
from birhythm.sweep import run_cells
from oscillators.cycles import (
    REGION_UNKNOWN,
    find_equilibrium,
    find_stable_cycle,
    label_survey,
    survey,
)
from oscillators.integrate import IntegratorConfig
from oscillators.models import State, get_model, jacobian

logger = logging.getLogger(__name__)

FOLD_TOLERANCE = 1e-4
HOPF_TOLERANCE = 1e-4
# Finite-difference step of the normal-form derivatives, relative to the model scale
LYAPUNOV_STEP = 1e-3
FOLD_INNER = "fold_inner"
FOLD_OUTER = "fold_outer"
HOPF = "hopf"
# Coarse steps along a path before a fold is bracketed
PATH_STEPS = 50


@dataclass(frozen=True)
class CycleSketch:
    """What a scan keeps of a cycle."""

    amplitude: float
    period: float
    crossing: State
    x_max: float
    x_min: float

    @classmethod
    def of(cls, cycle):
        """Sketch of a full cycle."""
        extrema = cycle.extrema
        return cls(
            amplitude=cycle.amplitude,
            period=cycle.period,
            crossing=cycle.crossing,
            x_max=extrema["x_max"],
            x_min=extrema["x_min"],
        )


@dataclass(frozen=True)
class CellSummary:
    """Attractors of one scanned parameter point."""

    region: str
    equilibrium: object = None
    cycles: tuple = ()
    theta: CycleSketch | None = None

    @property
    def known(self):
        """Whether the survey of this cell succeeded."""
        return self.region != REGION_UNKNOWN and self.equilibrium is not None


def survey_cell(model_name, fixed, cfg, overrides):
    """Survey ``fixed`` with ``overrides`` applied, never raising."""
    params = fixed.replace(**overrides)
    try:
        result = survey(model_name, params, cfg)
    except NumericalError as exc:
        logger.debug("survey failed at %s: %s", overrides, exc)
        return CellSummary(region=REGION_UNKNOWN)
    try:
        region = label_survey(model_name, result)
    except Ambiguous:
        region = REGION_UNKNOWN
    return CellSummary(
        region=region,
        equilibrium=result.equilibrium,
        cycles=tuple(CycleSketch.of(cycle) for cycle in result.cycles),
        theta=CycleSketch.of(result.theta) if result.theta is not None else None,
    )


def _follow(model, params, vanishing, survivor, cfg):
    """Continuation of the cycle sketched by ``vanishing``, or None if gone."""
    try:
        cycle = find_stable_cycle(model, params, vanishing.crossing, cfg)
    except ConvergedToEquilibrium:
        return None
    except NotPeriodic:
        # Slow convergence near the fold
        return vanishing
    if survivor is not None and abs(cycle.amplitude - vanishing.amplitude) >= abs(
        cycle.amplitude - survivor.amplitude
    ):
        return None
    return CycleSketch.of(cycle)


def _cycle_persists(model, params, vanishing, survivor, cfg):
    return _follow(model, params, vanishing, survivor, cfg) is not None


def _fold_pair(more, fewer):
    """``(vanishing, survivor, kind)`` across a change in the cycle count."""
    survivor = fewer.cycles[0] if fewer.cycles else None
    if len(more.cycles) == 1:
        return more.cycles[0], None, FOLD_OUTER
    inner, outer = more.cycles
    if survivor is None or abs(survivor.amplitude - outer.amplitude) < abs(
        survivor.amplitude - inner.amplitude
    ):
        return inner, survivor, FOLD_INNER
    return outer, survivor, FOLD_OUTER


def switch_point(predicate, inside, outside, tolerance):
    """Value between ``inside`` and ``outside`` where ``predicate`` turns false.

    ``predicate`` must hold at ``inside`` and fail at ``outside``; the ends may
    come in either order. Raises NoConvergence when they do not bracket a
    switch.
    """

    def side(value):
        return 1.0 if predicate(value) else -1.0

    try:
        return float(bisect(side, inside, outside, xtol=tolerance))
    except ValueError as exc:
        raise NoConvergence(f"no switch between {inside} and {outside}") from exc


def refine_fold(model_name, fixed, param, inside, outside, vanishing, survivor, cfg):
    """Parameter value where ``vanishing`` disappears between the two values."""

    def persists(value):
        params = fixed.replace(**{param: value})
        return _cycle_persists(model_name, params, vanishing, survivor, cfg)

    return switch_point(persists, inside, outside, FOLD_TOLERANCE)


def refine_hopf(model_name, fixed, param, stable, unstable):
    """Parameter value where the equilibrium changes stability."""

    def is_stable(value):
        return find_equilibrium(model_name, fixed.replace(**{param: value})).stable

    return switch_point(is_stable, stable, unstable, HOPF_TOLERANCE)


def _normal_form_basis(matrix):
    """Columns taking the linear part at a Hopf point to a rotation by omega."""
    (a11, a12), (_, a22) = matrix
    determinant = float(np.linalg.det(matrix))
    if determinant <= 0 or a12 == 0:
        raise NoConvergence("equilibrium is not a center")
    omega = np.sqrt(determinant)
    half = 0.5 * (a11 - a22)
    return np.array([[a12, 0.0], [-half, -omega]]), omega


def first_lyapunov(model, params, equilibrium=None):
    """First Lyapunov coefficient of the equilibrium at a Hopf point.

    Negative values give a supercritical Hopf bifurcation, positive ones a
    subcritical one. Derivatives up to third order come from central
    differences of the field in normal-form coordinates.
    """
    model = get_model(model)
    if equilibrium is None:
        equilibrium = find_equilibrium(model, params).location
    center = np.asarray(equilibrium, dtype=float)
    basis, omega = _normal_form_basis(jacobian(model, center, params))
    inverse = np.linalg.inv(basis)
    h = LYAPUNOV_STEP * model.scale / np.linalg.norm(basis)

    def transformed(i, j):
        try:
            value = model.rhs(center + basis @ np.array([i * h, j * h]), params)
        except DomainEscape as exc:
            raise NoConvergence(f"normal-form stencil left the domain: {exc}") from exc
        return inverse @ np.array(value)

    offsets = {(0, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)}
    offsets |= {(k, 0) for k in (-2, -1, 1, 2)} | {(0, k) for k in (-2, -1, 1, 2)}
    v = {offset: transformed(*offset) for offset in offsets}
    xx = (v[1, 0] - 2 * v[0, 0] + v[-1, 0]) / h**2
    yy = (v[0, 1] - 2 * v[0, 0] + v[0, -1]) / h**2
    xy = (v[1, 1] - v[1, -1] - v[-1, 1] + v[-1, -1]) / (4 * h**2)
    xxx = (v[2, 0] - 2 * v[1, 0] + 2 * v[-1, 0] - v[-2, 0]) / (2 * h**3)
    yyy = (v[0, 2] - 2 * v[0, 1] + 2 * v[0, -1] - v[0, -2]) / (2 * h**3)
    xxy = (
        v[1, 1] - 2 * v[0, 1] + v[-1, 1] - v[1, -1] + 2 * v[0, -1] - v[-1, -1]
    ) / (2 * h**3)
    xyy = (
        v[1, 1] - 2 * v[1, 0] + v[1, -1] - v[-1, 1] + 2 * v[-1, 0] - v[-1, -1]
    ) / (2 * h**3)
    f, g = 0, 1
    cubic = xxx[f] + xyy[f] + xxy[g] + yyy[g]
    quadratic = (
        xy[f] * (xx[f] + yy[f])
        - xy[g] * (xx[g] + yy[g])
        - xx[f] * xx[g]
        + yy[f] * yy[g]
    )
    return float(cubic / 16.0 + quadratic / (16.0 * omega))


def _transition(model_name, fixed, param, a, b, cell_a, cell_b, cfg):
    """Refined transitions between two neighbouring cells, as ``(kind, value)``."""
    found = []
    if not (cell_a.known and cell_b.known):
        return found
    if cell_a.equilibrium.stable != cell_b.equilibrium.stable:
        stable, unstable = (a, b) if cell_a.equilibrium.stable else (b, a)
        try:
            found.append((HOPF, refine_hopf(model_name, fixed, param, stable, unstable)))
        except NumericalError as exc:
            logger.debug("hopf refinement failed near %s=%s: %s", param, a, exc)
        # A Hopf point moves the equilibrium the folds are measured against
        return found
    counts = len(cell_a.cycles), len(cell_b.cycles)
    if sorted(counts) not in ([1, 2], [0, 1]):
        return found
    more, fewer = (cell_a, cell_b) if counts[0] > counts[1] else (cell_b, cell_a)
    inside, outside = (a, b) if counts[0] > counts[1] else (b, a)
    vanishing, survivor, kind = _fold_pair(more, fewer)
    try:
        value = refine_fold(
            model_name, fixed, param, inside, outside, vanishing, survivor, cfg
        )
    except NumericalError as exc:
        logger.debug("fold refinement failed near %s=%s: %s", param, a, exc)
        return found
    found.append((kind, value))
    return found


def _transition_task(model_name, fixed, cfg, task):
    param, a, b, cell_a, cell_b, base = task
    fixed = fixed.replace(**base)
    return [
        (kind, {**base, param: value})
        for kind, value in _transition(model_name, fixed, param, a, b, cell_a, cell_b, cfg)
    ]


@dataclass(frozen=True, eq=False)
class BranchTable:
    """One-parameter scan: attractor extents per value plus refined folds."""

    param: str
    values: np.ndarray
    cells: tuple
    transitions: tuple = ()

    def branch_rows(self):
        """Yield ``(param, branch, value)`` rows."""
        for value, cell in zip(self.values, self.cells, strict=True):
            p = float(value)
            if cell.equilibrium is not None:
                x_e, y_e = cell.equilibrium.location
                yield p, "e0_x", float(x_e)
                yield p, "e0_y", float(y_e)
                yield p, "e0_stable", 1.0 if cell.equilibrium.stable else 0.0
            named = {}
            if len(cell.cycles) == 2:
                named = {"gamma2": cell.cycles[0], "gamma1": cell.cycles[1]}
            elif len(cell.cycles) == 1:
                named = {"cycle": cell.cycles[0]}
            if cell.theta is not None:
                named["theta"] = cell.theta
            for name, sketch in named.items():
                yield p, f"{name}_max", float(sketch.x_max)
                yield p, f"{name}_min", float(sketch.x_min)
        for kind, value in self.transitions:
            yield float(value), kind, float(value)

    def folds(self, kind=None):
        """Parameter values of the folds, optionally of one kind."""
        return [
            value
            for found, value in self.transitions
            if found != HOPF and (kind is None or found == kind)
        ]

    @property
    def birhythmic_values(self):
        """Scanned values whose cell holds two stable cycles."""
        return np.array(
            [float(v) for v, cell in zip(self.values, self.cells, strict=True) if len(cell.cycles) == 2]
        )

    def to_csv(self, path):
        return write_csv(path, ["param", "branch", "value"], self.branch_rows())


def scan_one_param(model, fixed, param, start, stop, resolution=61, cfg=None, workers=None):
    """Survey ``param`` over ``[start, stop]`` and refine the transitions."""
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    if start == stop:
        values = np.array([float(start)])
    else:
        values = np.linspace(start, stop, resolution)
    cells = run_cells(
        partial(survey_cell, model.name, fixed, cfg),
        [{param: float(v)} for v in values],
        workers,
    )
    tasks = [
        (param, float(a), float(b), cell_a, cell_b, {})
        for (a, cell_a), (b, cell_b) in pairwise(zip(values, cells, strict=True))
    ]
    found = run_cells(
        partial(_transition_task, model.name, fixed, cfg), tasks, workers, label="pairs"
    )
    transitions = tuple(
        (kind, point[param]) for pair in found for kind, point in pair
    )
    logger.info("%s scan over %s: %d transition(s)", model.name, param, len(transitions))
    return BranchTable(
        param=param, values=values, cells=tuple(cells), transitions=transitions
    )


def chain(points):
    """Order scattered curve points into a polyline by nearest neighbours."""
    remaining = [np.asarray(point, dtype=float) for point in points]
    if not remaining:
        return np.empty((0, 2))
    remaining.sort(key=lambda point: (point[0], point[1]))
    line = [remaining.pop(0)]
    while remaining:
        k = int(np.argmin([np.hypot(*(point - line[-1])) for point in remaining]))
        line.append(remaining.pop(k))
    return np.array(line)


@dataclass(frozen=True, eq=False)
class TwoParamScan:
    """Region labels over a grid with the curves separating them."""

    p1_name: str
    p1_values: np.ndarray
    p2_name: str
    p2_values: np.ndarray
    regions: tuple
    polylines: dict = field(default_factory=dict)
    gh: tuple | None = None
    # First Lyapunov coefficient at each Hopf polyline point, NaN where it failed
    lyapunov: np.ndarray | None = None

    def region_rows(self):
        """(p1, p2, region) rows in grid order."""
        for i, p1 in enumerate(self.p1_values):
            for j, p2 in enumerate(self.p2_values):
                yield float(p1), float(p2), self.regions[i][j]

    def polyline_rows(self, name):
        for p1, p2 in self.polylines.get(name, ()):
            yield float(p1), float(p2)

    def hopf_rows(self):
        """Hopf points with their first Lyapunov coefficient."""
        line = self.polylines.get(HOPF, ())
        values = self.lyapunov if self.lyapunov is not None else np.full(len(line), np.nan)
        for (p1, p2), value in zip(line, values, strict=True):
            yield float(p1), float(p2), float(value)

    def labels(self):
        """Region labels present on the grid."""
        return {label for row in self.regions for label in row}

    def to_csv(self, directory):
        """Write the region grid, one CSV per curve and the GH estimate."""
        paths = [write_csv(directory / "regions.csv", ["p1", "p2", "region"], self.region_rows())]
        paths.append(write_csv(directory / f"{HOPF}.csv", ["p1", "p2", "l1"], self.hopf_rows()))
        for name in (FOLD_INNER, FOLD_OUTER):
            paths.append(
                write_csv(directory / f"{name}.csv", ["p1", "p2"], self.polyline_rows(name))
            )
        rows = [(float(self.gh[0]), float(self.gh[1]))] if self.gh is not None else []
        paths.append(write_csv(directory / "gh.csv", ["p1", "p2"], rows))
        return paths


def closest_pair(first, second):
    """Midpoint of the closest pair of points between two polylines."""
    if len(first) == 0 or len(second) == 0:
        return None
    first, second = np.asarray(first), np.asarray(second)
    gaps = np.hypot(
        first[:, np.newaxis, 0] - second[np.newaxis, :, 0],
        first[:, np.newaxis, 1] - second[np.newaxis, :, 1],
    )
    i, j = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
    return tuple(float(v) for v in 0.5 * (first[i] + second[j]))


def _lyapunov_at(model_name, fixed, names, point):
    params = fixed.replace(**dict(zip(names, point, strict=True)))
    try:
        return first_lyapunov(model_name, params)
    except NumericalError as exc:
        logger.debug("no Lyapunov coefficient at %s: %s", point, exc)
        return np.nan


def lyapunov_sign_change(line, values):
    """First point of ``line`` where ``values`` change sign, interpolated."""
    line = np.asarray(line, dtype=float)
    values = np.asarray(values, dtype=float)
    for k in range(len(line) - 1):
        a, b = values[k], values[k + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            weight = a / (a - b)
            return tuple(float(v) for v in line[k] + weight * (line[k + 1] - line[k]))
    return None


def scan_two_param(model, fixed, p1, p2, cfg=None, workers=None):
    """Region grid over ``p1`` by ``p2`` with Hopf and fold curves.

    ``p1`` and ``p2`` are ``(name, values)`` pairs. The generalized Hopf point
    is placed where the first Lyapunov coefficient changes sign along the
    Hopf curve. Without a sign change it falls back to the closest approach
    of the Hopf curve and a fold curve.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    (name1, values1), (name2, values2) = p1, p2
    values1 = np.asarray(values1, dtype=float)
    values2 = np.asarray(values2, dtype=float)
    overrides = [{name1: float(a), name2: float(b)} for a in values1 for b in values2]
    flat = run_cells(partial(survey_cell, model.name, fixed, cfg), overrides, workers)
    width = len(values2)
    grid = [flat[i : i + width] for i in range(0, len(flat), width)]

    tasks = []
    for i, a in enumerate(values1):
        for j, b in enumerate(values2):
            if j + 1 < width:
                tasks.append(
                    (name2, float(b), float(values2[j + 1]), grid[i][j], grid[i][j + 1], {name1: float(a)})
                )
            if i + 1 < len(values1):
                tasks.append(
                    (name1, float(a), float(values1[i + 1]), grid[i][j], grid[i + 1][j], {name2: float(b)})
                )
    found = run_cells(
        partial(_transition_task, model.name, fixed, cfg), tasks, workers, label="pairs"
    )
    points = {HOPF: [], FOLD_INNER: [], FOLD_OUTER: []}
    for pair in found:
        for kind, point in pair:
            points[kind].append((point[name1], point[name2]))
    polylines = {kind: chain(found_points) for kind, found_points in points.items()}
    lyapunov = np.array(
        run_cells(
            partial(_lyapunov_at, model.name, fixed, (name1, name2)),
            [tuple(point) for point in polylines[HOPF]],
            workers,
            label="Hopf points",
        ),
        dtype=float,
    )
    gh = lyapunov_sign_change(polylines[HOPF], lyapunov)
    if gh is None:
        logger.info("no sign change of the Lyapunov coefficient, using the folds")
        gh = closest_pair(polylines[HOPF], polylines[FOLD_INNER]) or closest_pair(
            polylines[HOPF], polylines[FOLD_OUTER]
        )
    logger.info(
        "%s plane scan: %s",
        model.name,
        ", ".join(f"{kind} {len(line)}" for kind, line in polylines.items()),
    )
    return TwoParamScan(
        p1_name=name1,
        p1_values=values1,
        p2_name=name2,
        p2_values=values2,
        regions=tuple(tuple(cell.region for cell in row) for row in grid),
        polylines=polylines,
        gh=gh,
        lyapunov=lyapunov,
    )


def fold_along_path(model, path, cfg=None, limit=None, steps=PATH_STEPS):
    """Magnitude ``b`` at which the base cycle disappears along ``path``.

    The search runs up to ``limit``, by default the length of the path, and
    gives None when the base cycle survives throughout.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    start = survey(model, path.plus, cfg)
    if not start.birhythmic:
        raise NotPeriodic(f"{path.plus} is not birhythmic")
    if path.base_cycle == "gamma1":
        vanishing, survivor = start.gamma1, start.gamma2
    else:
        vanishing, survivor = start.gamma2, start.gamma1
    sketch = CycleSketch.of(vanishing)
    other = CycleSketch.of(survivor)

    previous = 0.0
    limit = path.length if limit is None else limit
    for b in np.linspace(0.0, limit, steps + 1)[1:]:
        followed = _follow(model, path.at_magnitude(float(b)), sketch, other, cfg)
        if followed is None:
            def persists(value, last=sketch):
                return _cycle_persists(model, path.at_magnitude(value), last, other, cfg)

            fold = switch_point(persists, previous, float(b), FOLD_TOLERANCE)
            logger.info("base cycle vanishes at b=%.5f", fold)
            return fold
        sketch, previous = followed, float(b)
    return None
