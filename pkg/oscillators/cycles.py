"""
Equilibria, limit cycles and region labels of the frozen systems.

Stable cycles are found by iterating the Poincare return map of the forward
flow. Unstable cycles are found the same way on the negated vector field:
in the plane a repelling cycle attracts in reversed time.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from birhythm.exceptions import (
    Ambiguous,
    ConvergedToEquilibrium,
    DomainEscape,
    NoConvergence,
    NotPeriodic,
    StepSizeUnderflow,
    WrongBasin,
)
from oscillators.integrate import (
    IntegratorConfig,
    integrate_field,
    iter_chunks,
    iter_crossings,
)
from oscillators.models import State, get_model, jacobian

logger = logging.getLogger(__name__)

SAMPLE_COUNT = 2048
MAX_RETURNS = 500
RETURN_TOLERANCE = 1e-9
# Return differences this small that stop shrinking are accepted as converged
NOISE_FLOOR = 1e-6
NEWTON_TOLERANCE = 1e-12
MAX_NEWTON = 100

STABLE = "stable"
UNSTABLE = "unstable"

REGION_I = "I"
REGION_II = "II"
REGION_III = "III"
REGION_IV = "IV"
REGION_OUTSIDE = "outside"
# Used by scans for cells whose survey failed
REGION_UNKNOWN = "unknown"

REGION_CHOICES = [
    (REGION_I, "birhythmic"),
    (REGION_II, "small cycle alone or hard excitation"),
    (REGION_III, "stable equilibrium"),
    (REGION_IV, "single cycle"),
    (REGION_OUTSIDE, "no attractor"),
    (REGION_UNKNOWN, "undetermined"),
]


@dataclass(frozen=True)
class Equilibrium:
    """Equilibrium point with the eigenvalues of its Jacobian."""

    location: State
    eigenvalues: tuple[complex, complex]
    stability: str

    @property
    def stable(self):
        """Whether every eigenvalue has a negative real part."""
        return self.stability == STABLE

    @property
    def max_real(self):
        return max(value.real for value in self.eigenvalues)


@dataclass(frozen=True, eq=False)
class LimitCycle:
    """Periodic orbit sampled uniformly in time over one period.

    Sample 0 is the anchor: the point of maximal x, refined between samples.
    The endpoint at ``t = T`` is not repeated; ``closure_error`` is the gap
    between the orbit at ``T`` and the anchor relative to the cycle extent.
    """

    samples: np.ndarray
    period: float
    stability: str
    params: object
    model: str
    anchor_index: int = 0
    closure_error: float = 0.0
    crossing: State | None = None

    @property
    def angular_frequency(self):
        """Imaginary part of the leading eigenvalue, zero for a node."""
        return 2.0 * np.pi / self.period

    @property
    def times(self):
        return self.period * np.arange(len(self.samples)) / len(self.samples)

    @property
    def amplitude(self):
        """Half the extent of the cycle in x."""
        return 0.5 * float(np.ptp(self.samples[:, 0]))

    @property
    def diameter(self):
        """Diagonal of the bounding box."""
        return float(np.hypot(*np.ptp(self.samples, axis=0)))

    @property
    def extrema(self):
        """Bounding box of the samples, keyed x_min, x_max, y_min and y_max."""
        lower = self.samples.min(axis=0)
        upper = self.samples.max(axis=0)
        return {
            "x_min": float(lower[0]),
            "x_max": float(upper[0]),
            "y_min": float(lower[1]),
            "y_max": float(upper[1]),
        }

    @property
    def anchor(self):
        return State(*self.samples[self.anchor_index])

    def same_as(self, other, rtol=1e-3):
        """Whether two cycles are numerically the same orbit."""
        amplitude = max(self.amplitude, other.amplitude)
        period = max(self.period, other.period)
        return (
            abs(self.amplitude - other.amplitude) <= rtol * amplitude
            and abs(self.period - other.period) <= rtol * period
        )


def find_equilibrium(model, params, seed=None):
    """Damped Newton iteration on the vector field."""
    model = get_model(model)
    if seed is None:
        seed = model.equilibrium_seed(params)
    u = np.asarray(seed, dtype=float)
    residual = float(np.linalg.norm(model.rhs(u, params)))
    for _ in range(MAX_NEWTON):
        if residual < NEWTON_TOLERANCE:
            break
        matrix = jacobian(model, u, params)
        try:
            step = np.linalg.solve(matrix, -np.array(model.rhs(u, params)))
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Jacobian at {u}") from exc
        damping = 1.0
        while True:
            trial = u + damping * step
            try:
                trial_residual = float(np.linalg.norm(model.rhs(trial, params)))
            except DomainEscape:
                trial_residual = np.inf
            if trial_residual < residual or damping < 1e-6:
                break
            damping /= 2.0
        if not np.isfinite(trial_residual):
            raise NoConvergence(f"Newton left the domain from {u}")
        u, residual = trial, trial_residual
    else:
        raise NoConvergence(f"residual {residual:.3e} after {MAX_NEWTON} iterations")

    matrix = jacobian(model, u, params)
    half_trace = 0.5 * np.trace(matrix)
    root = np.emath.sqrt(half_trace**2 - np.linalg.det(matrix))
    eigenvalues = (complex(half_trace + root), complex(half_trace - root))
    stability = STABLE if max(e.real for e in eigenvalues) < 0 else UNSTABLE
    return Equilibrium(location=State(*u), eigenvalues=eigenvalues, stability=stability)


def _collapsed(traj, points, equilibrium, scale):
    center = np.asarray(equilibrium, dtype=float)
    if points and np.hypot(*(points[-1] - center)) < 1e-3 * scale:
        return True
    extent = float(np.ptp(traj.states, axis=0).max())
    return extent < 1e-3 * scale and np.hypot(*(traj.final - center)) < 1e-2 * scale


def _stalled(diffs, scale):
    if len(diffs) < 20:
        return False
    recent = diffs[-10:]
    return max(recent) < NOISE_FLOOR * scale and min(recent) >= 0.9 * min(diffs[-20:-10])


def _converge_returns(model, fun, seed, section, equilibrium, cfg):
    """Iterate the return map until consecutive returns agree."""
    scale = model.scale
    tolerance = RETURN_TOLERANCE * scale
    times, points, diffs = [], [], []
    empty = 0
    chunks = iter_chunks(fun, seed, 4.0 * model.time_scale, cfg, bound=model.bound)
    try:
        for traj in chunks:
            hits = list(iter_crossings(traj, section, model.time_scale))
            for t, state in hits:
                if points:
                    diffs.append(float(np.hypot(*(state - points[-1]))))
                times.append(t)
                points.append(state)
            if _collapsed(traj, points, equilibrium, scale):
                raise ConvergedToEquilibrium(
                    f"orbit collapsed onto the equilibrium after {len(points)} returns"
                )
            empty = 0 if hits else empty + 1
            if empty >= 3:
                raise NotPeriodic("returns to the section ceased")
            if len(points) >= 6:
                if diffs[-1] < tolerance:
                    return times, points
                if _stalled(diffs, scale):
                    logger.warning(
                        "return map stalled at %.3e after %d returns, accepting",
                        diffs[-1],
                        len(points),
                    )
                    return times, points
            if len(points) >= MAX_RETURNS:
                raise NotPeriodic(
                    f"returns still differ by {diffs[-1]:.3e} after {len(points)}"
                )
    except (DomainEscape, StepSizeUnderflow) as exc:
        raise NotPeriodic(f"orbit diverged: {exc}") from exc
    raise NotPeriodic("integration stopped")


def _resample(fun, start, period, cfg):
    """Sample one period starting at the refined maximum of x."""
    traj = integrate_field(fun, start, (0.0, 3.1 * period), cfg)
    dt = period / SAMPLE_COUNT
    coarse = period + dt * np.arange(SAMPLE_COUNT)
    k = int(np.argmax(traj(coarse)[0]))
    lower, middle, upper = traj(coarse[k] + dt * np.array([-1.0, 0.0, 1.0]))[0]
    curvature = lower - 2.0 * middle + upper
    offset = 0.5 * (lower - upper) / curvature if curvature < 0 else 0.0
    t_anchor = coarse[k] + offset * dt
    samples = traj(t_anchor + dt * np.arange(SAMPLE_COUNT)).T
    closure = float(np.hypot(*(traj(t_anchor + period) - samples[0])))
    return samples, closure


def _build_cycle(model, params, fun, times, points, cfg, stability):
    period = (times[-1] - times[-6]) / 5.0
    samples, closure = _resample(fun, points[-1], period, cfg)
    if stability == UNSTABLE:
        # Restore forward time order, keeping the anchor at index 0
        samples = np.roll(samples[::-1], 1, axis=0)
    extent = float(np.hypot(*np.ptp(samples, axis=0))) or 1.0
    logger.debug(
        "%s %s cycle: period %.6f after %d returns",
        model.name,
        stability,
        period,
        len(times),
    )
    return LimitCycle(
        samples=samples,
        period=float(period),
        stability=stability,
        params=params,
        model=model.name,
        closure_error=closure / extent,
        crossing=State(*points[-1]),
    )


def find_stable_cycle(model, params, seed, cfg=None, equilibrium=None):
    """Converge onto the stable cycle whose basin contains ``seed``."""
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    if equilibrium is None:
        equilibrium = find_equilibrium(model, params).location
    fun = model.field(params)
    section = model.section(equilibrium)
    times, points = _converge_returns(model, fun, seed, section, equilibrium, cfg)
    return _build_cycle(model, params, fun, times, points, cfg, STABLE)


def find_unstable_cycle(model, params, seed, cfg=None, equilibrium=None):
    """Converge onto the repelling cycle around ``seed`` in reversed time."""
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    if equilibrium is None:
        equilibrium = find_equilibrium(model, params).location
    forward = model.field(params)

    def fun(t, u):
        return -forward(t, u)

    section = model.section(equilibrium).reversed()
    try:
        times, points = _converge_returns(model, fun, seed, section, equilibrium, cfg)
    except ConvergedToEquilibrium as exc:
        raise WrongBasin(f"reversed flow from {tuple(seed)} reached the equilibrium") from exc
    return _build_cycle(model, params, fun, times, points, cfg, UNSTABLE)


def amplitude_polynomial(p):
    """Coefficients of the amplitude equation in ``z = A**2``, highest first."""
    return (-5.0 * p.beta * p.mu / 64.0, p.alpha * p.mu / 8.0, -p.mu / 4.0, p.mu - p.d)


def amplitude_roots(p, resolution=20000):
    """Positive roots of the single-harmonic amplitude equation, ascending."""
    coefficients = np.trim_zeros(np.array(amplitude_polynomial(p)), "f")
    if len(coefficients) < 2:
        return []
    # Cauchy bound on z
    bound = 1.0 + np.max(np.abs(coefficients[1:] / coefficients[0]))
    grid = np.linspace(0.0, np.sqrt(bound), resolution + 1)[1:]

    def equation(amplitude):
        return np.polyval(coefficients, amplitude * amplitude)

    values = equation(grid)
    roots = [float(a) for a, value in zip(grid, values, strict=True) if value == 0]
    for k in np.nonzero(values[:-1] * values[1:] < 0)[0]:
        roots.append(float(bisect(equation, grid[k], grid[k + 1], xtol=1e-10)))
    return sorted(roots)


@dataclass(frozen=True, eq=False)
class CycleSurvey:
    """Attractors reached from the seed fan, plus the separatrix if any."""

    model: str
    params: object
    equilibrium: Equilibrium
    cycles: tuple
    theta: LimitCycle | None = None
    failures: tuple = ()

    @property
    def birhythmic(self):
        """Whether two stable cycles coexist."""
        return len(self.cycles) == 2

    @property
    def gamma1(self):
        """Outer stable cycle of a birhythmic point."""
        return self.cycles[1] if self.birhythmic else None

    @property
    def gamma2(self):
        """Inner stable cycle of a birhythmic point."""
        return self.cycles[0] if self.birhythmic else None


def seed_fan(model, center):
    """Twelve seeds on two circles around ``center``."""
    model = get_model(model)
    angles = np.pi * np.arange(6) / 3.0
    seeds = []
    for radius in model.fan_radii:
        for angle in angles:
            point = np.asarray(center) + radius * np.array([np.cos(angle), np.sin(angle)])
            seeds.append(model.clip(point))
    return seeds


def survey(model, params, cfg=None):
    """Find every stable cycle reachable from the seed fan and the separatrix."""
    model = get_model(model)
    cfg = cfg or IntegratorConfig()
    equilibrium = find_equilibrium(model, params)
    center = np.asarray(equilibrium.location)
    fun = model.field(params)
    cycles, failures = [], []
    for seed in seed_fan(model, center):
        try:
            landing = integrate_field(
                fun, seed, (0.0, 8.0 * model.time_scale), cfg, bound=model.bound
            ).final
        except (DomainEscape, StepSizeUnderflow) as exc:
            failures.append(type(exc).__name__)
            continue
        if any(_near(cycle, landing, 1e-2 * model.scale) for cycle in cycles):
            continue
        try:
            cycle = find_stable_cycle(
                model, params, landing, cfg, equilibrium=equilibrium.location
            )
        except ConvergedToEquilibrium:
            continue
        except NotPeriodic as exc:
            failures.append(type(exc).__name__)
            continue
        if not any(cycle.same_as(other) for other in cycles):
            cycles.append(cycle)
    cycles.sort(key=lambda cycle: cycle.diameter)

    theta = None
    inner = None
    if len(cycles) == 2:
        inner = np.asarray(cycles[0].crossing)
    elif len(cycles) == 1 and equilibrium.stable:
        inner = center
    if inner is not None:
        seed = 0.5 * (inner + np.asarray(cycles[-1].crossing))
        try:
            theta = find_unstable_cycle(
                model, params, seed, cfg, equilibrium=equilibrium.location
            )
        except (NotPeriodic, WrongBasin) as exc:
            logger.debug("no separatrix from %s: %s", seed, exc)

    return CycleSurvey(
        model=model.name,
        params=params,
        equilibrium=equilibrium,
        cycles=tuple(cycles),
        theta=theta,
        failures=tuple(failures),
    )


def _near(cycle, state, tolerance):
    distances = np.hypot(*(cycle.samples - np.asarray(state)).T)
    return distances.min() < tolerance


def label_survey(model, result):
    """Region label for a survey."""
    model = get_model(model)
    if result.failures:
        raise Ambiguous(f"seeds failed to settle: {', '.join(result.failures)}")
    count = len(result.cycles)
    if count == 2:
        return REGION_I
    if count == 0:
        return REGION_III if result.equilibrium.stable else REGION_OUTSIDE
    if count == 1:
        cycle = result.cycles[0]
        if model.region_by_amplitude:
            return REGION_II if cycle.amplitude < model.scale else REGION_IV
        return REGION_II if result.equilibrium.stable else REGION_IV
    raise Ambiguous(f"{count} distinct stable cycles found")


def classify_region(model, params, cfg=None):
    """Label a parameter point by its attractors."""
    return label_survey(model, survey(model, params, cfg))
