"""
Adaptive Runge-Kutta integration of planar systems.

Integration uses the Dormand-Prince 5(4) pair from scipy, stepped one step at
a time so that the step cap can follow a moving input and so that stiffness
is reported as an error instead of silently slowing the run down. Every
accepted step keeps its dense-output interpolant, which section crossings and
cycle resampling evaluate later.
"""

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field, replace
from numbers import Real

import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq

from birhythm import settings
from birhythm.exceptions import (
    DomainEscape,
    NoCrossing,
    ParameterError,
    StepSizeUnderflow,
)
from birhythm.export import write_csv

logger = logging.getLogger(__name__)

# Relative span below which a requested step counts as underflow
UNDERFLOW_FRACTION = 1e-12

# Half-width of the step-capped window around a switch time, in units of 1/r
WINDOW_HALF_WIDTH = 40.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and limits for one integration."""

    rel_tol: float = settings.REL_TOL
    abs_tol: float = settings.ABS_TOL
    max_step: float = np.inf
    max_time: float = 1e6

    def __post_init__(self):
        self.clean()

    def clean(self):
        """Validate the tolerances."""
        names = ("rel_tol", "abs_tol", "max_step", "max_time")
        errors = {
            name: f"{name} must be a number"
            for name in names
            if isinstance(getattr(self, name), bool) or not isinstance(getattr(self, name), Real)
        }
        if errors:
            raise ParameterError(errors)
        if not 0 < self.rel_tol <= 1e-3:
            errors["rel_tol"] = "rel_tol must be in (0, 1e-3]"
        if not self.abs_tol > 0:
            errors["abs_tol"] = "abs_tol must be positive"
        if not self.max_step > 0:
            errors["max_step"] = "max_step must be positive"
        if not self.max_time > 0:
            errors["max_time"] = "max_time must be positive"
        if errors:
            raise ParameterError(errors)

    def tightened(self, factor=10.0):
        """Return a copy with both tolerances divided by ``factor``."""
        return replace(self, rel_tol=self.rel_tol / factor, abs_tol=self.abs_tol / factor)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one integration plus their dense output."""

    times: np.ndarray
    states: np.ndarray
    solution: OdeSolution | None = None
    order: int = 4

    def __len__(self):
        return len(self.times)

    def __call__(self, t):
        """Evaluate the dense output at ``t`` (scalar or array)."""
        if self.solution is None:
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(self.states[0], (*t.shape, 2)).T.copy()
        return self.solution(t)

    @property
    def start(self):
        return float(self.times[0])

    @property
    def end(self):
        return float(self.times[-1])

    @property
    def final(self):
        """State at the end of the run."""
        return self.states[-1].copy()

    def sample(self, step=None):
        """Return ``(times, states)`` on a uniform grid of width ``step``.

        Without a step the accepted integrator steps are returned.
        """
        if step is None or self.solution is None:
            return self.times.copy(), self.states.copy()
        count = int(np.floor((self.end - self.start) / step + 1e-9)) + 1
        times = self.start + step * np.arange(count)
        return times, self(times).T

    def rows(self, step=None):
        """Yield ``(t, x, y)`` rows for CSV export."""
        times, states = self.sample(step)
        for t, (x, y) in zip(times, states, strict=True):
            yield float(t), float(x), float(y)

    def to_csv(self, path, step=None):
        """Write the trajectory as ``t,x,y`` rows."""
        return write_csv(path, ["t", "x", "y"], self.rows(step))


@dataclass(frozen=True)
class Section:
    """Signed scalar event function on the state plane.

    ``direction`` is +1 for crossings from negative to positive values, -1 for
    the opposite and 0 for both. ``where`` optionally filters crossing states.
    """

    fun: Callable[[np.ndarray], float]
    direction: int = 0
    where: Callable[[np.ndarray], bool] | None = field(default=None)

    def reversed(self):
        """Section seen by the time-reversed flow."""
        return replace(self, direction=-self.direction)

    def accepts(self, before, after):
        """Whether the step from ``before`` to ``after`` crosses the section in its direction."""
        if self.direction > 0:
            return before < 0 <= after
        if self.direction < 0:
            return before > 0 >= after
        return (before < 0 <= after) or (before > 0 >= after)


def _step_cap(max_step, rate, centers):
    """Build the step cap used around the switch times of a fast input."""
    if rate is None or not centers:
        return None
    width = WINDOW_HALF_WIDTH / rate
    inner = 0.1 / rate

    def cap(t):
        nearest = min(centers, key=lambda c: abs(t - c))
        if abs(t - nearest) < width:
            return min(max_step, inner)
        # Do not jump over the start of the next window
        ahead = [c - width - t for c in centers if c - width > t]
        if ahead:
            return min(max_step, max(min(ahead), inner))
        return max_step

    return cap


def integrate_field(fun, x0, t_span, cfg=None, step_cap=None, bound=None):
    """Integrate ``u' = fun(t, u)`` from ``x0`` over ``t_span``.

    ``step_cap`` maps the current time to a maximum step. ``bound`` makes the
    run fail with DomainEscape once the state norm exceeds it.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    y0 = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(y0)):
        raise DomainEscape(f"initial state {y0} is not finite")
    span = abs(t1 - t0)
    if span > cfg.max_time:
        raise ParameterError({"t_span": f"span {span} exceeds max_time {cfg.max_time}"})
    if span == 0:
        return Trajectory(times=np.array([t0]), states=y0[np.newaxis, :])

    solver = RK45(
        fun, t0, y0, t1, rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step
    )
    times = [t0]
    states = [y0]
    interpolants = []
    while solver.status == "running":
        if step_cap is not None:
            solver.max_step = step_cap(solver.t)
        message = solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflow(f"integration failed at t={solver.t}: {message}")
        if not np.all(np.isfinite(solver.y)):
            raise DomainEscape(f"state became non-finite at t={solver.t}")
        if bound is not None and np.hypot(*solver.y) > bound:
            raise DomainEscape(f"state left the disc of radius {bound} at t={solver.t}")
        if solver.status == "running" and solver.step_size < UNDERFLOW_FRACTION * span:
            raise StepSizeUnderflow(
                f"step {solver.step_size:.3e} below {UNDERFLOW_FRACTION:g} of the span"
            )
        times.append(solver.t)
        states.append(solver.y.copy())
        interpolants.append(solver.dense_output())

    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        solution=OdeSolution(np.array(times), interpolants),
    )


def integrate_autonomous(model, params, x0, t_span, cfg=None):
    """Integrate the frozen system of ``model`` at ``params``."""
    from oscillators.models import get_model

    model = get_model(model)
    return integrate_field(model.field(params), x0, t_span, cfg)


def integrate_nonautonomous(
    model, params_base, shift, which_param, x0, t_span, cfg=None, path=None
):
    """Integrate with ``which_param`` replaced by the shift value at every stage.

    When ``path`` is given its slaved coordinates follow the input as well. A
    shift of zero magnitude integrates the frozen system at the shift level.
    """
    from oscillators.models import get_model

    model = get_model(model)
    cfg = cfg or IntegratorConfig()

    def overrides(value):
        if path is not None:
            return path.overrides(value)
        return {which_param: value}

    if shift.b == 0:
        frozen = replace(params_base, **overrides(shift.level))
        return integrate_field(model.field(frozen), x0, t_span, cfg)

    fun = model.field(params_base, drive=lambda t: overrides(shift.at(t)))
    cap = _step_cap(cfg.max_step, shift.r, shift.windows())
    return integrate_field(fun, x0, t_span, cfg, step_cap=cap)


def find_section_crossings(traj, section, time_scale=1.0):
    """Locate the crossings of ``section`` along ``traj``.

    Crossings are bracketed between accepted steps and refined with Brent's
    method on the dense output to ``1e-10 * time_scale``.
    """
    crossings = list(iter_crossings(traj, section, time_scale))
    if not crossings:
        raise NoCrossing("trajectory does not cross the section")
    return crossings


def iter_crossings(traj, section, time_scale=1.0):
    """Yield ``(time, state)`` for every accepted crossing of ``section``."""
    if traj.solution is None:
        return
    values = np.array([section.fun(state) for state in traj.states])

    def event(t):
        return section.fun(traj(t))

    for k in range(len(values) - 1):
        if not section.accepts(values[k], values[k + 1]):
            continue
        t_lo, t_hi = traj.times[k], traj.times[k + 1]
        if values[k + 1] == 0:
            t_hit = t_hi
        else:
            t_hit = brentq(event, t_lo, t_hi, xtol=1e-10 * time_scale, rtol=4 * np.finfo(float).eps)
        state = traj(t_hit)
        if section.where is not None and not section.where(state):
            continue
        yield float(t_hit), state


def iter_chunks(fun, x0, chunk, cfg=None, bound=None, t0=0.0) -> Iterator[Trajectory]:
    """Integrate indefinitely in consecutive chunks of length ``chunk``."""
    state = np.asarray(x0, dtype=float)
    t = t0
    while True:
        traj = integrate_field(fun, state, (t, t + chunk), cfg, bound=bound)
        yield traj
        state, t = traj.final, traj.end
