"""Phase of points on a limit cycle.

The phase of ``gamma(t)`` is ``2*pi*t/T`` where ``t`` is the time elapsed along
the cycle since the anchor, the point of maximal x.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from birhythm.exceptions import AmbiguousAnchor, NotOnCycle
from birhythm.export import write_csv
from oscillators.models import State

TWO_PI = 2.0 * np.pi

# Distance, relative to the cycle extent, within which a state counts as on it
ON_CYCLE_TOLERANCE = 1e-3


def periodic_spline(cycle):
    """Periodic cubic interpolant of the cycle over one period."""
    times = np.append(cycle.times, cycle.period)
    points = np.vstack([cycle.samples, cycle.samples[:1]])
    return CubicSpline(times, points, bc_type="periodic", extrapolate="periodic")


@dataclass(frozen=True, eq=False)
class PhasedCycle:
    """Limit cycle rotated so that sample 0 is the anchor."""

    cycle: object
    spline: CubicSpline

    @property
    def anchor(self):
        return State(*self.cycle.samples[0])

    @property
    def period(self):
        """Period of the underlying cycle."""
        return self.cycle.period

    @property
    def phases(self):
        count = len(self.cycle.samples)
        return TWO_PI * np.arange(count) / count

    def point_at_time(self, t):
        """State at time ``t`` after the anchor, wrapped into one period."""
        return self.spline(np.mod(t, self.period))

    def rows(self):
        """Yield ``(index, x, y, phi)`` rows."""
        for index, ((x, y), phi) in enumerate(
            zip(self.cycle.samples, self.phases, strict=True)
        ):
            yield index, float(x), float(y), float(phi)

    def to_csv(self, path):
        """Write the phase grid as t, phi, x, y rows."""
        return write_csv(path, ["index", "x", "y", "phi"], self.rows())


def _local_maxima(values):
    before = np.roll(values, 1)
    after = np.roll(values, -1)
    return np.nonzero((values >= before) & (values > after))[0]


def build_phased_cycle(cycle):
    """Anchor the cycle at its maximum of x and attach the phase grid."""
    x = cycle.samples[:, 0]
    maxima = _local_maxima(x)
    if len(maxima) > 1:
        top = np.sort(x[maxima])[-2:]
        if top[1] - top[0] < 1e-8:
            raise AmbiguousAnchor(f"two maxima of x within {top[1] - top[0]:.1e}")
    count = len(x)
    k = int(np.argmax(x))
    lower, middle, upper = x[(k - 1) % count], x[k], x[(k + 1) % count]
    curvature = lower - 2.0 * middle + upper
    offset = 0.5 * (lower - upper) / curvature if curvature < 0 else 0.0
    if k == 0 and abs(offset) < 1e-12:
        return PhasedCycle(cycle=cycle, spline=periodic_spline(cycle))
    raw = periodic_spline(cycle)
    t_anchor = (k + offset) * cycle.period / count
    samples = raw(t_anchor + cycle.times)
    rotated = replace(cycle, samples=samples, anchor_index=0)
    return PhasedCycle(cycle=rotated, spline=periodic_spline(rotated))


def _nearest_time(pc, state):
    state = np.asarray(state, dtype=float)
    samples = pc.cycle.samples
    k = int(np.argmin(np.hypot(*(samples - state).T)))
    dt = pc.period / len(samples)
    center = k * dt

    def distance2(t):
        offset = pc.point_at_time(t) - state
        return float(offset @ offset)

    result = minimize_scalar(
        distance2,
        bounds=(center - dt, center + dt),
        method="bounded",
        options={"xatol": 1e-12 * pc.period},
    )
    return float(np.mod(result.x, pc.period)), float(np.sqrt(result.fun))


def _wrap(phi):
    phi = float(np.mod(phi, TWO_PI))
    # The anchor can come back as 2*pi minus rounding
    return 0.0 if TWO_PI - phi < 1e-10 else phi


def project_phase(pc, state):
    """Phase of the nearest cycle point, for states near but off the cycle."""
    t, _ = _nearest_time(pc, state)
    return _wrap(TWO_PI * t / pc.period)


def phase_of_point(pc, state):
    """Phase in ``[0, 2*pi)`` of a state on the cycle."""
    t, distance = _nearest_time(pc, state)
    if distance > ON_CYCLE_TOLERANCE * pc.cycle.diameter:
        raise NotOnCycle(f"state {tuple(state)} is {distance:.3e} away from the cycle")
    return _wrap(TWO_PI * t / pc.period)


def time_of_phase(pc, phi):
    return float(np.mod(phi, TWO_PI)) * pc.period / TWO_PI


def point_at_phase(pc, phi):
    """State on the cycle at phase ``phi``."""
    return State(*pc.point_at_time(time_of_phase(pc, phi)))
