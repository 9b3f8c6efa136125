"""
Tracking or tipping of driven runs, and the diagrams built from them.

A run starts on the base cycle, is driven along a parameter path by one of
the input laws and is judged once the input has settled: it tracks when it
ends in the basin of the base cycle's continuation at the future limit and
tips when it ends in the basin of the other cycle.
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from itertools import pairwise

import numpy as np

from birhythm.exceptions import (
    NoSeparatrix,
    NotOnCycle,
    NumericalError,
    PathOutOfRegion,
)
from birhythm.sweep import run_cells
from oscillators.integrate import IntegratorConfig, integrate_nonautonomous
from oscillators.models import State, get_model
from oscillators.phase import (
    build_phased_cycle,
    phase_of_point,
    point_at_phase,
    project_phase,
)
from oscillators.scans import switch_point
from tipping.basin import (
    BAND,
    OUTER,
    boundary_at,
    dist_to_set,
    side_of,
    unstable_arcs,
)
from tipping.forcing import GAMMA1, GAMMA2, IMPULSE, limits, settled_time
from tipping.models import (
    CriticalRateCurve,
    Outcome,
    SeriesOutcome,
    TippingGrid,
)

logger = logging.getLogger(__name__)

SETTLE_EPSILON = 1e-8
SETTLE_PERIODS = 5
# Relative width at which a critical rate counts as located
RATE_TOLERANCE = 1e-3
# Largest distance of a start state from the base cycle, relative to its diameter
START_TOLERANCE = 5e-3


@dataclass(frozen=True)
class TippingSpec:
    """Everything a grid cell needs besides its own coordinates."""

    model: str
    path: object
    kind: str
    t_c: float
    cfg: IntegratorConfig
    x0: State | None = None

    def shift(self, b, r):
        """Input law of the cell at magnitude ``b`` and rate ``r``."""
        return self.path.shift(self.kind, b, r, self.t_c)


def outcome_at(boundary, state, base_cycle):
    """Judge ``state`` against the basins at ``boundary``."""
    d1 = dist_to_set(state, boundary.outer)
    d2 = dist_to_set(state, boundary.inner)
    basin = boundary.classify(state)
    if basin == BAND:
        return Outcome(
            kind=Outcome.INDETERMINATE,
            dist_gamma1=d1,
            dist_gamma2=d2,
            reason="boundary band",
        )
    attractor = GAMMA1 if basin == OUTER else GAMMA2
    return Outcome(
        kind=Outcome.TRACK if attractor == base_cycle else Outcome.TIP,
        attractor=attractor,
        dist_gamma1=d1,
        dist_gamma2=d2,
    )


def future_boundary(model, path, shift, cfg=None):
    """Basin boundary at the future limit of ``shift``."""
    if (
        shift.kind != IMPULSE
        and path.fold_magnitude is not None
        and shift.b > path.fold_magnitude
    ):
        raise PathOutOfRegion(
            f"b={shift.b} passes the fold at b={path.fold_magnitude}"
        )
    _, future = limits(shift)
    try:
        return boundary_at(model, path.params_at(future), cfg)
    except NoSeparatrix as exc:
        raise PathOutOfRegion(f"no separatrix at {path.param}={future}") from exc


def check_start(model, path, shift, x0, cfg=None):
    """Distance of ``x0`` from the base cycle at the past limit of ``shift``.

    Raises NotOnCycle when the gap exceeds ``START_TOLERANCE`` of the cycle
    diameter.
    """
    past, _ = limits(shift)
    try:
        boundary = boundary_at(model, path.params_at(past), cfg)
    except NoSeparatrix as exc:
        raise PathOutOfRegion(f"no separatrix at {path.param}={past}") from exc
    cycle = boundary.cycle(path.base_cycle)
    gap = dist_to_set(x0, cycle)
    if gap > START_TOLERANCE * cycle.diameter:
        raise NotOnCycle(
            f"{tuple(map(float, x0))} lies {gap:.3g} from {path.base_cycle} "
            f"at {path.param}={past}"
        )
    return gap


def classify(model, path, shift, x0, cfg=None):
    """Track or Tip for one driven run from ``x0``.

    ``x0`` must lie on the base cycle of the frozen system at the past limit
    of the input.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    check_start(model, path, shift, x0, cfg)
    boundary = future_boundary(model, path, shift, cfg)
    base = boundary.cycle(path.base_cycle)
    end = max(settled_time(shift, SETTLE_EPSILON), 0.0) + SETTLE_PERIODS * base.period
    traj = integrate_nonautonomous(
        model, path.plus, shift, path.param, x0, (0.0, end), cfg, path=path
    )
    return outcome_at(boundary, traj.final, path.base_cycle)


def _classify_cell(spec, task):
    b, r, x0 = task
    try:
        return classify(spec.model, spec.path, spec.shift(b, r), x0, spec.cfg)
    except NumericalError as exc:
        return Outcome.failed(type(exc).__name__)


def _assemble(outcomes, width):
    return tuple(tuple(outcomes[i : i + width]) for i in range(0, len(outcomes), width))


def tipping_diagram(model, path, kind, x0, b_grid, r_grid, t_c, cfg=None, workers=None):
    """Outcomes over a magnitude by rate grid at fixed ``t_c``."""
    model = get_model(model)
    spec = TippingSpec(
        model=model.name,
        path=path,
        kind=kind,
        t_c=float(t_c),
        cfg=cfg or IntegratorConfig(),
        x0=State(*x0),
    )
    b_grid = np.asarray(b_grid, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    check_start(model, path, spec.shift(float(b_grid[0]), float(r_grid[0])), spec.x0, spec.cfg)
    tasks = [(b, r, spec.x0) for b in b_grid for r in r_grid]
    outcomes = run_cells(
        partial(_classify_cell, spec), tasks, workers, chunksize=len(r_grid)
    )
    return TippingGrid(
        row_name="b",
        rows=b_grid,
        cols=r_grid,
        outcomes=_assemble(outcomes, len(r_grid)),
        t_c=float(t_c),
        spec=spec,
    )


def _bisect_rate(spec, b, x0, r_lo, r_hi, kind_lo):
    """Rate between ``r_lo`` and ``r_hi`` where the outcome leaves ``kind_lo``.

    Bisection runs on ``log r``.
    """

    def same(log_r):
        return _classify_cell(spec, (b, math.exp(log_r), x0)).kind == kind_lo

    log_rate = switch_point(
        same, math.log(r_lo), math.log(r_hi), math.log1p(RATE_TOLERANCE)
    )
    return math.exp(log_rate)


def critical_rates(grid, b):
    """Every rate along the r axis of ``grid`` at ``b`` where the outcome flips.

    Indeterminate cells are skipped when bracketing.
    """
    spec = grid.spec
    index = grid.row_index(b)
    if index is None:
        row = [_classify_cell(spec, (b, r, spec.x0)) for r in grid.cols]
    else:
        row = grid.outcomes[index]
    known = [
        (float(r), outcome.kind)
        for r, outcome in zip(grid.cols, row, strict=True)
        if outcome.determinate
    ]
    rates = tuple(
        _bisect_rate(spec, b, spec.x0, r_lo, r_hi, kind_lo)
        for (r_lo, kind_lo), (r_hi, kind_hi) in pairwise(known)
        if kind_lo != kind_hi
    )
    logger.info("b=%g: %d critical rate(s)", b, len(rates))
    return rates


def critical_rate_curve(grid, magnitudes=None):
    """Critical rates for each magnitude, by default every grid row."""
    magnitudes = grid.rows if magnitudes is None else magnitudes
    return CriticalRateCurve(
        rates=tuple((float(b), critical_rates(grid, b)) for b in magnitudes)
    )


def default_tc_list(model, period):
    """Peak times stepped around four base periods."""
    model = get_model(model)
    return [4.0 * period + model.tc_step * k for k in model.tc_offsets]


def base_phased_cycle(model, path, cfg=None):
    """Phased base cycle of the frozen system at ``p_plus``."""
    boundary = boundary_at(model, path.plus, cfg)
    return build_phased_cycle(boundary.cycle(path.base_cycle))


def tc_sweep(model, path, kind, x0, b_grid, r_grid, t_c_list=None, cfg=None, workers=None):
    """One tipping diagram per peak time."""
    if t_c_list is None:
        period = base_phased_cycle(model, path, cfg).period
        t_c_list = default_tc_list(model, period)
    return [
        tipping_diagram(model, path, kind, x0, b_grid, r_grid, t_c, cfg, workers)
        for t_c in t_c_list
    ]


def pace_vs_phase(model, path, kind, b, r_grid, phi_grid, t_c, cfg=None, workers=None):
    """Outcomes over an initial phase by rate grid at fixed magnitude.

    The overlay marks the phases whose base-cycle points lie outside the
    basin at the far point ``p_plus - b`` of the path.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    base = base_phased_cycle(model, path, cfg)
    spec = TippingSpec(model=model.name, path=path, kind=kind, t_c=float(t_c), cfg=cfg)
    phi_grid = np.asarray(phi_grid, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    tasks = [
        (b, r, point_at_phase(base, phi)) for phi in phi_grid for r in r_grid
    ]
    outcomes = run_cells(
        partial(_classify_cell, spec), tasks, workers, chunksize=len(r_grid)
    )
    far = boundary_at(model, path.at_magnitude(b), cfg)
    arcs = unstable_arcs(base, far, side_of(path.base_cycle))
    overlay = np.array([arcs.contains_phase(phi) for phi in phi_grid], dtype=bool)
    return TippingGrid(
        row_name="phi",
        rows=phi_grid,
        cols=r_grid,
        outcomes=_assemble(outcomes, len(r_grid)),
        t_c=float(t_c),
        spec=spec,
        overlay=overlay,
        arcs=arcs,
        extra={"b": float(b)},
    )


def tipping_phases(grid, column):
    """Rows of a pace grid that tip at rate index ``column``."""
    return np.array([grid.outcomes[i][column].tipped for i in range(len(grid.rows))])


def phase_of_start(model, path, x0, cfg=None):
    """Phase of the base-cycle point nearest ``x0`` at ``p_plus``.

    Start states are accepted within ``START_TOLERANCE`` of the cycle, looser
    than the tolerance of an exact phase lookup.
    """
    base = base_phased_cycle(model, path, cfg)
    if dist_to_set(x0, base.cycle) > START_TOLERANCE * base.cycle.diameter:
        return phase_of_point(base, x0)
    return project_phase(base, x0)


def series_checkpoints(shift, period):
    """Times at which an impulse run is judged.

    The first follows the rising switch by the same settling offset the
    falling switch gets, capped halfway to the second switch; the second
    comes ``SETTLE_PERIODS`` periods after the input has settled.
    """
    settled = settled_time(shift, SETTLE_EPSILON)
    offset = settled - shift.t_c2
    first = min(shift.t_c1 + offset, 0.5 * (shift.t_c1 + shift.t_c2))
    return first, settled + SETTLE_PERIODS * period


def _series_cell(model_name, path, shift, cfg, boundaries, checkpoints, x0):
    high, low = boundaries
    try:
        traj = integrate_nonautonomous(
            model_name,
            path.plus,
            shift,
            path.param,
            x0,
            (0.0, checkpoints[1]),
            cfg,
            path=path,
        )
    except NumericalError as exc:
        failed = Outcome.failed(type(exc).__name__)
        return SeriesOutcome(x0=tuple(x0), first=failed, second=failed, checkpoints=checkpoints)
    return SeriesOutcome(
        x0=tuple(x0),
        first=outcome_at(high, traj(checkpoints[0]), path.base_cycle),
        second=outcome_at(low, traj.final, path.base_cycle),
        checkpoints=checkpoints,
    )


def series_demo(model, path, shift, x0_list, cfg=None, workers=None):
    """Basins visited by impulse runs from each ``x0``.

    The first checkpoint is judged against the frozen system at the top of
    the impulse, the second against the frozen system at its base level.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    high = boundary_at(model, path.params_at(shift.level + shift.b), cfg)
    low = boundary_at(model, path.params_at(shift.level), cfg)
    period = max(low.outer.period, low.inner.period)
    checkpoints = series_checkpoints(shift, period)
    func = partial(_series_cell, model.name, path, shift, cfg, (high, low), checkpoints)
    return run_cells(func, [State(*x0) for x0 in x0_list], workers, label="runs")
