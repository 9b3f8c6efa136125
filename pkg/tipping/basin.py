"""
Basins of attraction of the two stable cycles and their instability.

In the birhythmic region the unstable cycle theta is the whole boundary
between the basins of the planar system: states it encloses go to the inner
cycle, the others to the outer one. Membership is therefore a
point-in-polygon test against the sampled theta.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache, partial

import numpy as np

from birhythm.exceptions import (
    DomainEscape,
    NoOnset,
    NoSeparatrix,
    NotPeriodic,
    NumericalError,
    StepSizeUnderflow,
)
from birhythm.sweep import run_cells
from oscillators.cycles import Equilibrium, LimitCycle, survey
from oscillators.integrate import IntegratorConfig, iter_chunks
from oscillators.models import get_model
from oscillators.scans import switch_point
from tipping.forcing import GAMMA1
from tipping.models import BIRegion, UnstableArcSet

logger = logging.getLogger(__name__)

INNER = "inner"
OUTER = "outer"
BAND = "band"

MEMBERSHIP_CHOICES = [
    (INNER, "Basin of the inner cycle"),
    (OUTER, "Basin of the outer cycle"),
    (BAND, "Too close to the separatrix to tell"),
]

# Band half-width around theta, relative to its diameter
BAND_WIDTH = 1e-3
ARC_TOLERANCE = 1e-6
PATH_TOLERANCE = 1e-4
# Points per vectorized block in the polygon tests
BLOCK = 256
# Chunks of one time scale before the basin oracle gives up on a sample
ORACLE_CHUNKS = 200


def winding_numbers(points, polygon):
    """Winding number of the closed ``polygon`` around each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    start = np.asarray(polygon, dtype=float)
    end = np.roll(start, -1, axis=0)
    dx = end[:, 0] - start[:, 0]
    dy = end[:, 1] - start[:, 1]
    counts = np.empty(len(points), dtype=int)
    for lo in range(0, len(points), BLOCK):
        px = points[lo : lo + BLOCK, 0:1]
        py = points[lo : lo + BLOCK, 1:2]
        left = dx * (py - start[:, 1]) - (px - start[:, 0]) * dy
        upward = (start[:, 1] <= py) & (end[:, 1] > py) & (left > 0)
        downward = (start[:, 1] > py) & (end[:, 1] <= py) & (left < 0)
        counts[lo : lo + BLOCK] = upward.sum(axis=1) - downward.sum(axis=1)
    return counts


def polygon_distances(points, polygon):
    """Distance from each point to the nearest edge of the closed ``polygon``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    start = np.asarray(polygon, dtype=float)
    edge = np.roll(start, -1, axis=0) - start
    length2 = np.maximum((edge**2).sum(axis=1), np.finfo(float).tiny)
    distances = np.empty(len(points))
    for lo in range(0, len(points), BLOCK):
        offset = points[lo : lo + BLOCK, np.newaxis, :] - start
        along = np.clip((offset * edge).sum(axis=-1) / length2, 0.0, 1.0)
        gap = offset - along[..., np.newaxis] * edge
        distances[lo : lo + BLOCK] = np.sqrt((gap**2).sum(axis=-1)).min(axis=1)
    return distances


def _segment_distance(point, a, b):
    edge = b - a
    length2 = float(edge @ edge)
    along = 0.0 if length2 == 0 else float(np.clip((point - a) @ edge / length2, 0.0, 1.0))
    return float(np.hypot(*(a + along * edge - point)))


def dist_to_set(s, cycle):
    """Distance from ``s`` to the sampled cycle.

    The nearest sample is refined on its two adjacent segments.
    """
    point = np.asarray(s, dtype=float)
    samples = cycle.samples
    k = int(np.argmin(np.hypot(*(samples - point).T)))
    count = len(samples)
    return min(
        _segment_distance(point, samples[k - 1], samples[k]),
        _segment_distance(point, samples[k], samples[(k + 1) % count]),
    )


@dataclass(frozen=True, eq=False)
class BasinBoundary:
    """Separatrix theta together with the two cycles it separates."""

    theta: LimitCycle
    inner: LimitCycle
    outer: LimitCycle
    equilibrium: Equilibrium

    @property
    def polygon(self):
        return self.theta.samples

    @property
    def band(self):
        """Half-width of the band around theta where no basin is assigned."""
        return BAND_WIDTH * self.theta.diameter

    def cycle(self, name):
        """The stable cycle called ``name`` (gamma1 or gamma2)."""
        return self.outer if name == GAMMA1 else self.inner

    def contains(self, points):
        """Whether each point is enclosed by theta."""
        return winding_numbers(points, self.polygon) != 0

    def distances(self, points):
        """Distance of each point to theta."""
        return polygon_distances(points, self.polygon)

    def classify(self, s):
        """Basin of ``s``: INNER, OUTER or BAND."""
        if self.distances(s)[0] < self.band:
            return BAND
        return INNER if self.contains(s)[0] else OUTER


def side_of(base_cycle):
    """Basin side of the named base cycle."""
    return OUTER if base_cycle == GAMMA1 else INNER


@lru_cache(maxsize=256)
def _boundary(model_name, params, cfg):
    result = survey(model_name, params, cfg)
    if not result.birhythmic or result.theta is None:
        raise NoSeparatrix(
            f"{len(result.cycles)} stable cycle(s) and no separatrix at {params}"
        )
    return BasinBoundary(
        theta=result.theta,
        inner=result.gamma2,
        outer=result.gamma1,
        equilibrium=result.equilibrium,
    )


def boundary_at(model, params, cfg=None):
    """Basin boundary of the frozen system, cached per parameter record."""
    return _boundary(get_model(model).name, params, cfg or IntegratorConfig())


def membership(model, params, s, cfg=None):
    """Basin of ``s`` in the frozen system at ``params``."""
    return boundary_at(model, params, cfg).classify(s)


def _infer_side(base, boundary):
    return OUTER if base.cycle.amplitude > boundary.theta.amplitude else INNER


def _signed_distances(base, boundary, side):
    samples = base.cycle.samples
    distances = boundary.distances(samples)
    inside = boundary.contains(samples)
    own = inside if side == INNER else ~inside
    return np.where(own, distances, -distances)


def closest_approach(base, boundary, side=None):
    """Time along the base cycle of its closest approach to theta.

    The distance is negative when the closest point already lies in the
    other basin.
    """
    side = side or _infer_side(base, boundary)
    signed = _signed_distances(base, boundary, side)
    k = int(np.argmin(signed))
    return float(base.cycle.times[k]), float(signed[k])


def unstable_arcs(base, boundary, side=None):
    """Arcs of the phased base cycle lying outside its basin at ``boundary``."""
    side = side or _infer_side(base, boundary)
    period = base.period
    times = base.cycle.times
    dt = period / len(times)

    def unstable(points):
        inside = boundary.contains(points)
        return ~inside if side == INNER else inside

    flags = unstable(base.cycle.samples)
    if not flags.any():
        return UnstableArcSet(period=period)
    if flags.all():
        return UnstableArcSet(arcs=((0.0, period),), period=period)

    def refine(t_lo, flag_lo):
        def same(t):
            return bool(unstable(base.point_at_time(t))[0]) == flag_lo

        return float(np.mod(switch_point(same, t_lo, t_lo + dt, ARC_TOLERANCE), period))

    starts, ends = [], []
    for k in np.nonzero(flags != np.roll(flags, -1))[0]:
        (ends if flags[k] else starts).append(refine(times[k], bool(flags[k])))
    arcs = []
    for start in sorted(starts):
        later = [end for end in ends if end > start]
        arcs.append((start, min(later) if later else min(ends)))
    return UnstableArcSet(arcs=tuple(arcs), period=period)


def marginal_parameter(base, path, cfg=None, tolerance=PATH_TOLERANCE):
    """Path coordinate where basin instability of ``base`` sets in."""
    side = side_of(path.base_cycle)

    def unstable_at(value):
        boundary = boundary_at(path.model, path.params_at(value), cfg)
        return closest_approach(base, boundary, side)[1] < 0

    lo, hi = path.p_plus, path.p_minus
    if unstable_at(lo):
        raise NoOnset(f"base cycle is already basin unstable at {path.param}={lo}")
    if not unstable_at(hi):
        raise NoOnset(f"no basin instability between {lo} and {hi}")
    onset = switch_point(lambda value: not unstable_at(value), lo, hi, tolerance)
    logger.info("basin instability sets in at %s=%.6f", path.param, onset)
    return onset


def flag_cell(base, boundary, side):
    """Basin-instability flag of ``base`` against one boundary."""
    arcs = unstable_arcs(base, boundary, side)
    if arcs.kind != UnstableArcSet.NONE:
        return arcs.kind
    _, distance = closest_approach(base, boundary, side)
    return BIRegion.MARGINAL if distance < boundary.band else BIRegion.NONE


def _region_cell(model_name, base, side, fixed, names, cfg, values):
    params = fixed.replace(**dict(zip(names, values, strict=True)))
    try:
        boundary = boundary_at(model_name, params, cfg)
    except NumericalError:
        return BIRegion.OUTSIDE
    return flag_cell(base, boundary, side)


def bi_region(model, base, fixed, p1, p2, base_cycle=GAMMA1, cfg=None, workers=None):
    """Flag basin instability of ``base`` over a two-parameter grid.

    ``p1`` and ``p2`` are ``(name, values)`` pairs; other parameters come from
    ``fixed``.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    side = side_of(base_cycle)
    (name1, values1), (name2, values2) = p1, p2
    tasks = [(v1, v2) for v1 in values1 for v2 in values2]
    func = partial(_region_cell, model.name, base, side, fixed, (name1, name2), cfg)
    flags = run_cells(func, tasks, workers, chunksize=len(values2), label="BI cells")
    width = len(values2)
    return BIRegion(
        p1_name=name1,
        p1_values=np.asarray(values1, dtype=float),
        p2_name=name2,
        p2_values=np.asarray(values2, dtype=float),
        flags=tuple(tuple(flags[i : i + width]) for i in range(0, len(flags), width)),
    )


def bi_magnitude(model, path, x0, cfg=None, coarse=40, tolerance=PATH_TOLERANCE):
    """Smallest shift magnitude putting ``x0`` outside the base cycle's basin."""
    inner_side = side_of(path.base_cycle) == INNER
    limit = path.fold_magnitude or path.length

    def outside(b):
        boundary = boundary_at(model, path.at_magnitude(b), cfg)
        return bool(boundary.contains(x0)[0]) != inner_side

    previous = 0.0
    for b in np.linspace(0.0, limit, coarse + 1)[1:]:
        try:
            crossed = outside(b)
        except NoSeparatrix:
            break
        if crossed:
            return switch_point(lambda value: not outside(value), previous, float(b), tolerance)
        previous = float(b)
    raise NoOnset(f"{tuple(x0)} stays in the base basin up to b={previous}")


def _settle(model_name, params, boundary, cfg, point):
    model = get_model(model_name)
    fun = model.field(params)
    targets = ((OUTER, boundary.outer), (INNER, boundary.inner))
    try:
        for count, traj in enumerate(
            iter_chunks(fun, point, model.time_scale, cfg, bound=model.bound)
        ):
            for label, cycle in targets:
                if dist_to_set(traj.final, cycle) < BAND_WIDTH * cycle.diameter:
                    return label
            if count >= ORACLE_CHUNKS:
                raise NotPeriodic(f"{tuple(point)} did not settle")
    except (DomainEscape, StepSizeUnderflow) as exc:
        raise NotPeriodic(f"{tuple(point)} escaped: {exc}") from exc
    return None


def _oracle_cell(model_name, params, boundary, cfg, point):
    try:
        return _settle(model_name, params, boundary, cfg, point)
    except NotPeriodic:
        return None


def oracle_agreement(model, params, count, seed, cfg=None, workers=None):
    """Fraction of random states whose polygon basin matches their fate.

    States are drawn uniformly from the bounding box of the outer cycle,
    widened by a tenth; states inside the boundary band are skipped.
    """
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    boundary = boundary_at(model, params, cfg)
    samples = boundary.outer.samples
    low, high = samples.min(axis=0), samples.max(axis=0)
    margin = 0.1 * (high - low)
    low, high = low - margin, high + margin
    low = np.asarray(model.clip(low))
    rng = np.random.default_rng(seed)
    points = rng.uniform(low, high, size=(count, 2))
    points = points[boundary.distances(points) >= boundary.band]
    predicted = np.where(boundary.contains(points), INNER, OUTER)
    func = partial(_oracle_cell, model.name, params, boundary, cfg)
    observed = run_cells(func, list(points), workers, chunksize=64, label="samples")
    agree = sum(
        label == fate for label, fate in zip(predicted, observed, strict=True)
    )
    return agree / len(points) if len(points) else 1.0
