"""Time-dependent inputs and the parameter paths they move along."""

import math
from dataclasses import dataclass

import numpy as np

from birhythm.exceptions import ParameterError
from oscillators.models import get_model

MONOTONE = "monotone"
NONMONOTONE = "nonmonotone"
IMPULSE = "impulse"

KIND_CHOICES = [
    (MONOTONE, "Monotone sech shift"),
    (NONMONOTONE, "Non-monotone sech pulse"),
    (IMPULSE, "Impulse between two tanh switches"),
]

GAMMA1 = "gamma1"
GAMMA2 = "gamma2"

BASE_CHOICES = [
    (GAMMA1, "Outer stable cycle"),
    (GAMMA2, "Inner stable cycle"),
]

# Slaved coordinates: name -> (slaved parameter, map from the path coordinate)
SLAVE_MAPS = {
    "gly_diagonal": ("v", lambda sigma_i: (-sigma_i + 3.11) / 6.86),
}


def sech(z):
    """Hyperbolic secant without overflow for large arguments."""
    decay = math.exp(-abs(z))
    return 2.0 * decay / (1.0 + decay * decay)


@dataclass(frozen=True)
class InputShift:
    """One input law.

    ``level`` is the reference level: the start level ``a`` of the sech laws
    and the base level of the impulse.
    """

    kind: str
    level: float
    b: float
    r: float
    t_c: float = 0.0
    t_c1: float = 0.0
    t_c2: float = 0.0

    def __post_init__(self):
        self.clean()

    def clean(self):
        """Validate the shift."""
        errors = {}
        if self.kind not in dict(KIND_CHOICES):
            errors["kind"] = f"unknown shift kind {self.kind!r}"
        if not self.r > 0:
            errors["r"] = "rate must be positive"
        if self.b < 0:
            errors["b"] = "magnitude must not be negative"
        if self.kind == IMPULSE and not self.t_c2 > self.t_c1:
            errors["t_c2"] = "impulse requires t_c2 > t_c1"
        if errors:
            raise ParameterError(errors)

    @classmethod
    def from_config(cls, data):
        """Build from the ``shift`` section of a run configuration."""
        kind = data.get("kind", MONOTONE)
        level_key = "base_level" if kind == IMPULSE else "a"
        if level_key not in data:
            raise ParameterError({level_key: f"{kind} shift needs {level_key}"})
        return cls(
            kind=kind,
            level=float(data[level_key]),
            b=float(data.get("b", 0.0)),
            r=float(data.get("r", 1.0)),
            t_c=float(data.get("t_c") or 0.0),
            t_c1=float(data.get("t_c1", 0.0)),
            t_c2=float(data.get("t_c2", 0.0)),
        )

    def at(self, t):
        """Value of the input at time ``t``."""
        return eval_shift(self, t)

    def windows(self):
        """Switch times around which the input changes quickly."""
        if self.kind == IMPULSE:
            return [self.t_c1, self.t_c2]
        return [self.t_c]


def _value(shift, t):
    if shift.kind == MONOTONE:
        if t <= shift.t_c:
            return shift.level - shift.b * sech(shift.r * (t - shift.t_c))
        return shift.level - shift.b
    if shift.kind == NONMONOTONE:
        return shift.level - shift.b * sech(shift.r * (t - shift.t_c))
    rise = math.tanh(shift.r * (t - shift.t_c1))
    fall = math.tanh(shift.r * (t - shift.t_c2))
    return shift.level + 0.5 * shift.b * (rise - fall)


def eval_shift(shift, t):
    """Value of the input at time ``t`` (scalar or array)."""
    if np.ndim(t) == 0:
        return _value(shift, float(t))
    return np.array([_value(shift, float(s)) for s in np.ravel(t)]).reshape(np.shape(t))


def limits(shift):
    """``(past, future)`` asymptotic levels of the input."""
    if shift.kind == MONOTONE:
        return shift.level, shift.level - shift.b
    return shift.level, shift.level


def settled_time(shift, epsilon):
    """Time after which the input stays within ``epsilon`` of its future limit."""
    if shift.kind == MONOTONE:
        return shift.t_c
    if shift.kind == NONMONOTONE:
        if shift.b <= epsilon:
            return shift.t_c
        return shift.t_c + math.acosh(shift.b / epsilon) / shift.r
    # b/2 * (1 - tanh(r (t - t_c2))) bounds the remaining offset
    if shift.b <= 2.0 * epsilon:
        return shift.t_c2
    return shift.t_c2 + math.atanh(1.0 - 2.0 * epsilon / shift.b) / shift.r


@dataclass(frozen=True)
class ParameterPath:
    """Segment of parameter space from ``p_plus`` down to ``p_minus``.

    ``base`` is the full parameter record; the varying parameter and any
    slaved coordinate are overwritten along the path. ``base_cycle`` names
    the stable cycle the system starts on.
    """

    model: str
    param: str
    base: object
    p_plus: float
    p_minus: float
    slave: str | None = None
    base_cycle: str = GAMMA1
    fold_magnitude: float | None = None

    def __post_init__(self):
        self.clean()

    def clean(self):
        """Validate the path."""
        errors = {}
        model = get_model(self.model)
        if self.param not in model.params_class.__dataclass_fields__:
            errors["param"] = f"{self.model} has no parameter {self.param!r}"
        if self.slave is not None and self.slave not in SLAVE_MAPS:
            errors["slave"] = f"unknown slaved map {self.slave!r}"
        if self.base_cycle not in dict(BASE_CHOICES):
            errors["base_cycle"] = f"unknown base cycle {self.base_cycle!r}"
        if self.fold_magnitude is not None and not self.fold_magnitude > 0:
            errors["fold_magnitude"] = "fold magnitude must be positive"
        if errors:
            raise ParameterError(errors)

    def overrides(self, value):
        """Parameter values at path coordinate ``value``."""
        values = {self.param: value}
        if self.slave is not None:
            name, slaved = SLAVE_MAPS[self.slave]
            values[name] = slaved(value)
        return values

    def params_at(self, value):
        """Parameter record at path coordinate ``value``."""
        return self.base.replace(**self.overrides(value))

    def at_magnitude(self, b):
        """Parameters after a downward shift of magnitude ``b`` from ``p_plus``."""
        return self.params_at(self.p_plus - b)

    @property
    def plus(self):
        return self.params_at(self.p_plus)

    @property
    def minus(self):
        return self.params_at(self.p_minus)

    @property
    def length(self):
        """Distance from ``p_plus`` to ``p_minus`` along the input parameter."""
        return abs(self.p_plus - self.p_minus)

    def coordinates(self, num):
        """``num`` evenly spaced path coordinates from ``p_plus`` to ``p_minus``."""
        return np.linspace(self.p_plus, self.p_minus, num)

    def shift(self, kind, b, r, t_c=0.0):
        """Sech-type input starting at ``p_plus`` along this path."""
        return InputShift(kind=kind, level=self.p_plus, b=b, r=r, t_c=t_c)

    def impulse(self, r, t_c1, t_c2):
        """Impulse from ``p_minus`` up to ``p_plus`` and back."""
        return InputShift(
            kind=IMPULSE,
            level=self.p_minus,
            b=self.p_plus - self.p_minus,
            r=r,
            t_c1=t_c1,
            t_c2=t_c2,
        )
