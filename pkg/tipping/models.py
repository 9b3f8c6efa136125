"""Result records of the basin and tipping analyses."""

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from birhythm.exceptions import ParameterError
from birhythm.export import write_csv
from oscillators.phase import TWO_PI


@dataclass(frozen=True)
class UnstableArcSet:
    """Time intervals of a base cycle lying outside its basin.

    Each arc is ``(t_start, t_end)`` in ``[0, T)``; an arc with
    ``t_end < t_start`` wraps through the anchor. A total set is the single
    arc ``(0, T)``.
    """

    NONE: ClassVar[str] = "none"
    PARTIAL: ClassVar[str] = "partial"
    TOTAL: ClassVar[str] = "total"

    arcs: tuple = ()
    period: float = 1.0

    def length(self, arc):
        """Duration of one arc, wrapping through the anchor."""
        start, end = arc
        if end == self.period and start == 0.0:
            return self.period
        return (end - start) % self.period

    @property
    def total_length(self):
        return sum(self.length(arc) for arc in self.arcs)

    @property
    def kind(self):
        if not self.arcs:
            return self.NONE
        if self.total_length >= self.period:
            return self.TOTAL
        return self.PARTIAL

    @property
    def phases(self):
        """The arcs as phase intervals."""
        scale = TWO_PI / self.period
        return tuple((start * scale, end * scale) for start, end in self.arcs)

    def contains(self, t):
        """Whether time ``t`` along the base cycle lies on an arc."""
        t = float(np.mod(t, self.period))
        for start, end in self.arcs:
            if start <= end:
                if start <= t <= end:
                    return True
            elif t >= start or t <= end:
                return True
        return False

    def contains_phase(self, phi):
        """Whether phase ``phi`` lies on an arc."""
        return self.contains(phi * self.period / TWO_PI)

    def rows(self):
        for (start, end), (phi_start, phi_end) in zip(self.arcs, self.phases, strict=True):
            yield float(start), float(end), float(phi_start), float(phi_end)

    def to_csv(self, path):
        return write_csv(path, ["t_start", "t_end", "phi_start", "phi_end"], self.rows())


@dataclass(frozen=True, eq=False)
class BIRegion:
    """Basin-instability flag per cell of a two-parameter grid."""

    NONE: ClassVar[str] = "none"
    PARTIAL: ClassVar[str] = "partial"
    TOTAL: ClassVar[str] = "total"
    MARGINAL: ClassVar[str] = "marginal"
    OUTSIDE: ClassVar[str] = "outside"

    p1_name: str
    p1_values: np.ndarray
    p2_name: str
    p2_values: np.ndarray
    flags: tuple

    def flag(self, i, j):
        return self.flags[i][j]

    def count(self, flag):
        """Number of cells carrying ``flag``."""
        return sum(row.count(flag) for row in self.flags)

    def rows(self):
        for i, p1 in enumerate(self.p1_values):
            for j, p2 in enumerate(self.p2_values):
                yield float(p1), float(p2), self.flags[i][j]

    def to_csv(self, path):
        return write_csv(path, ["p1", "p2", "flag"], self.rows())


@dataclass(frozen=True)
class Outcome:
    """Fate of one driven run.

    ``attractor`` is ``gamma1``, ``gamma2`` or empty when the run failed or
    ended in the boundary band; ``reason`` then says why.
    """

    TRACK: ClassVar[str] = "Track"
    TIP: ClassVar[str] = "Tip"
    INDETERMINATE: ClassVar[str] = "Indeterminate"

    kind: str
    attractor: str = ""
    dist_gamma1: float = float("nan")
    dist_gamma2: float = float("nan")
    reason: str = ""

    @property
    def tipped(self):
        """Whether the run ended in the other basin."""
        return self.kind == self.TIP

    @property
    def determinate(self):
        """Whether the run was judged Track or Tip."""
        return self.kind != self.INDETERMINATE

    @classmethod
    def failed(cls, reason):
        """Indeterminate outcome of a run that raised ``reason``."""
        return cls(kind=cls.INDETERMINATE, reason=reason)


@dataclass(frozen=True, eq=False)
class TippingGrid:
    """Outcomes over a (b, r) or (phi, r) grid at a fixed ``t_c``.

    ``spec`` carries what is needed to classify further points of the same
    family. ``overlay`` flags the basin-unstable rows of a pace grid.
    """

    row_name: str
    rows: np.ndarray
    cols: np.ndarray
    outcomes: tuple
    t_c: float
    spec: object = None
    col_name: str = "r"
    overlay: np.ndarray | None = None
    arcs: UnstableArcSet | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.clean()

    def clean(self):
        """Validate the axes against the outcome table."""
        errors = {}
        for name, axis in (("rows", self.rows), ("cols", self.cols)):
            if len(axis) > 1 and not np.all(np.diff(axis) > 0):
                errors[name] = f"{name} must be strictly increasing"
        if len(self.outcomes) != len(self.rows) or any(
            len(row) != len(self.cols) for row in self.outcomes
        ):
            errors["outcomes"] = "outcome table does not match the axes"
        if errors:
            raise ParameterError(errors)

    @property
    def shape(self):
        return len(self.rows), len(self.cols)

    def outcome(self, i, j):
        return self.outcomes[i][j]

    def kinds(self):
        """Outcome kinds as a string array shaped like the grid."""
        return np.array([[outcome.kind for outcome in row] for row in self.outcomes])

    def tip_mask(self):
        return self.kinds() == Outcome.TIP

    def row_index(self, value):
        """Index of the row equal to ``value``, or None."""
        matches = np.nonzero(np.isclose(self.rows, value, rtol=1e-9, atol=1e-12))[0]
        return int(matches[0]) if len(matches) else None

    def csv_rows(self):
        for i, row_value in enumerate(self.rows):
            for j, col_value in enumerate(self.cols):
                outcome = self.outcomes[i][j]
                yield (
                    float(row_value),
                    float(col_value),
                    outcome.kind,
                    outcome.attractor,
                    float(outcome.dist_gamma1),
                    float(outcome.dist_gamma2),
                )

    def to_csv(self, path):
        header = [self.row_name, self.col_name, "outcome", "attractor"]
        return write_csv(path, [*header, "dist_gamma1", "dist_gamma2"], self.csv_rows())


@dataclass(frozen=True)
class CriticalRateCurve:
    """Critical rates per magnitude; a tongue gives several per ``b``."""

    rates: tuple = ()

    def __len__(self):
        return len(self.rates)

    def at(self, b):
        """Critical rates at magnitude ``b``."""
        for value, found in self.rates:
            if np.isclose(value, b, rtol=1e-9, atol=1e-12):
                return found
        return ()

    def rows(self):
        for b, found in self.rates:
            for index, rate in enumerate(found, start=1):
                yield float(b), index, float(rate)

    def to_csv(self, path):
        return write_csv(path, ["b", "rc_index", "rc"], self.rows())


@dataclass(frozen=True)
class SeriesOutcome:
    """Basin of a run at the two checkpoints of an impulse."""

    x0: tuple
    first: Outcome
    second: Outcome
    checkpoints: tuple

    @property
    def sequence(self):
        """Attractors at the two checkpoints."""
        return self.first.attractor, self.second.attractor

    def row(self):
        x, y = self.x0
        return (
            float(x),
            float(y),
            self.first.attractor,
            self.second.attractor,
            float(self.checkpoints[0]),
            float(self.checkpoints[1]),
            float(self.second.dist_gamma1),
            float(self.second.dist_gamma2),
        )


SERIES_HEADER = [
    "x0",
    "y0",
    "first",
    "second",
    "t_first",
    "t_second",
    "dist_gamma1",
    "dist_gamma2",
]
