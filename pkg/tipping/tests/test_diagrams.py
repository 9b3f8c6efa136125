"""Tests for classification and the tipping diagrams."""

import math
from unittest import TestCase
from unittest.mock import patch

import numpy as np
import pytest

from birhythm.exceptions import NotOnCycle, PathOutOfRegion
from oscillators.cycles import STABLE, UNSTABLE, Equilibrium, LimitCycle
from oscillators.models import GlyParams, State, VdpParams
from oscillators.phase import TWO_PI
from tipping.basin import BasinBoundary
from tipping.diagrams import (
    START_TOLERANCE,
    check_start,
    classify,
    critical_rate_curve,
    critical_rates,
    default_tc_list,
    future_boundary,
    outcome_at,
    pace_vs_phase,
    phase_of_start,
    series_checkpoints,
    series_demo,
    tc_sweep,
    tipping_diagram,
    tipping_phases,
)
from tipping.forcing import GAMMA1, GAMMA2, IMPULSE, MONOTONE, NONMONOTONE, InputShift, ParameterPath
from tipping.models import Outcome, TippingGrid

VDP_PERIOD = 7.3133


def ring(radius, stability=STABLE, count=256, center=(0.0, 0.0)):
    angle = TWO_PI * np.arange(count) / count
    samples = np.column_stack(
        [center[0] + radius * np.cos(angle), center[1] - radius * np.sin(angle)]
    )
    return LimitCycle(samples=samples, period=TWO_PI, stability=stability, params=None, model="vdp")


def ring_boundary(theta):
    return BasinBoundary(
        theta=theta,
        inner=ring(1.0),
        outer=ring(4.0),
        equilibrium=Equilibrium(location=State(0.0, 0.0), eigenvalues=(1j, -1j), stability=UNSTABLE),
    )


def drifting_boundary(model, params, cfg=None):
    """Centred theta near the start of the path, off-centre theta further on.

    The off-centre theta encloses the outer ring where cos(phase) < 1/6.
    """
    if params.mu >= 1.5:
        return ring_boundary(ring(2.0, UNSTABLE))
    return ring_boundary(ring(4.5, UNSTABLE, center=(-1.5, 0.0)))


def vdp_path(**changes):
    values = {
        "model": "vdp",
        "param": "mu",
        "base": VdpParams(mu=1.52, alpha=0.0938, beta=0.00194, d=0.03),
        "p_plus": 1.52,
        "p_minus": 0.3,
        "fold_magnitude": 1.273,
        **changes,
    }
    return ParameterPath(**values)


def always_track(model, path, shift, x0, cfg=None):
    return Outcome(kind=Outcome.TRACK, attractor=GAMMA1)


def rate_window(low, high):
    """Fake classifier tipping for rates strictly between ``low`` and ``high``."""

    def fake(model, path, shift, x0, cfg=None):
        if shift.r == 3.0:
            return Outcome.failed("NotPeriodic")
        if low < shift.r < high:
            return Outcome(kind=Outcome.TIP, attractor=GAMMA2)
        return Outcome(kind=Outcome.TRACK, attractor=GAMMA1)

    return fake


class OutcomeAtTestCase(TestCase):
    """Test cases for outcome_at."""

    def setUp(self):
        """Set up test fixtures."""
        self.boundary = ring_boundary(ring(2.0, UNSTABLE))

    def test_track_on_outer_cycle(self):
        """Test that ending on the outer cycle tracks an outer base cycle."""
        outcome = outcome_at(self.boundary, (4.0, 0.0), GAMMA1)

        self.assertEqual(outcome.kind, Outcome.TRACK)
        self.assertEqual(outcome.attractor, GAMMA1)
        self.assertAlmostEqual(outcome.dist_gamma1, 0.0)
        self.assertAlmostEqual(outcome.dist_gamma2, 3.0, delta=1e-3)

    def test_tip_to_inner_cycle(self):
        """Test that ending inside theta tips an outer base cycle."""
        self.assertEqual(outcome_at(self.boundary, (0.0, 1.0), GAMMA1).kind, Outcome.TIP)
        self.assertEqual(outcome_at(self.boundary, (0.0, 1.0), GAMMA2).kind, Outcome.TRACK)

    def test_band_is_indeterminate(self):
        """Test that ending on theta cannot be judged."""
        outcome = outcome_at(self.boundary, (2.0, 0.0), GAMMA1)

        self.assertEqual(outcome.kind, Outcome.INDETERMINATE)
        self.assertEqual(outcome.reason, "boundary band")


class FutureBoundaryTestCase(TestCase):
    """Test cases for future_boundary."""

    def test_magnitude_past_the_fold(self):
        """Test that shifts crossing the fold leave the region."""
        path = vdp_path()
        shift = path.shift(MONOTONE, 1.3, 4.0, 4.0 * VDP_PERIOD)

        with self.assertRaises(PathOutOfRegion):
            future_boundary("vdp", path, shift)

    def test_impulse_ignores_fold(self):
        """Test that the impulse is judged at its base level, not against the fold."""
        path = vdp_path()
        shift = InputShift(kind=IMPULSE, level=1.0, b=3.0, r=1.0, t_c1=1.0, t_c2=2.0)
        sentinel = object()

        with patch("tipping.diagrams.boundary_at", return_value=sentinel) as mocked:
            self.assertIs(future_boundary("vdp", path, shift), sentinel)

        self.assertEqual(mocked.call_args.args[1].mu, 1.0)


@patch("tipping.diagrams.boundary_at", drifting_boundary)
class StartTestCase(TestCase):
    """Test cases for the start-state precondition."""

    def setUp(self):
        """Set up test fixtures."""
        self.path = vdp_path()
        self.shift = self.path.shift(MONOTONE, 1.0, 4.0, 28.0)

    def test_state_on_the_base_cycle(self):
        """Test that a state just off the base cycle is accepted with its gap."""
        self.assertAlmostEqual(check_start("vdp", self.path, self.shift, (4.02, 0.0)), 0.02, delta=1e-6)

    def test_state_off_the_base_cycle(self):
        """Test that a state far from the base cycle is refused."""
        with self.assertRaises(NotOnCycle):
            check_start("vdp", self.path, self.shift, (1.0, 0.0))

    def test_classify_refuses_a_bad_start(self):
        """Test that classify checks the start before integrating."""
        with patch("tipping.diagrams.integrate_nonautonomous") as mocked:
            with self.assertRaises(NotOnCycle):
                classify("vdp", self.path, self.shift, (1.0, 0.0))

        mocked.assert_not_called()

    def test_tipping_diagram_refuses_a_bad_start(self):
        """Test that a diagram from a bad start fails once instead of per cell."""
        with patch("tipping.diagrams.classify") as mocked:
            with self.assertRaises(NotOnCycle):
                tipping_diagram("vdp", self.path, MONOTONE, (1.0, 0.0), [0.5], [1.0], 28.0, workers=1)

        mocked.assert_not_called()

    def test_phase_of_start(self):
        """Test that a start state near the cycle is projected onto it."""
        gap = 0.5 * START_TOLERANCE * ring(4.0).diameter

        self.assertAlmostEqual(phase_of_start("vdp", self.path, (0.0, -4.0 - gap)), 0.5 * np.pi, delta=1e-2)
        with self.assertRaises(NotOnCycle):
            phase_of_start("vdp", self.path, (0.0, -2.0))


class CheckpointsTestCase(TestCase):
    """Test cases for series_checkpoints."""

    def test_long_path_impulse(self):
        """Test both checkpoints of the long-path impulse."""
        shift = InputShift(kind=IMPULSE, level=0.3, b=3.2, r=27.0, t_c1=30.0, t_c2=60.0)
        offset = math.atanh(1.0 - 2e-8 / 3.2) / 27.0
        first, second = series_checkpoints(shift, 10.0)

        self.assertAlmostEqual(first, 30.0 + offset)
        self.assertAlmostEqual(second, 60.0 + offset + 50.0)

    def test_slow_impulse_is_capped(self):
        """Test that the first checkpoint stays before the midpoint of the plateau."""
        shift = InputShift(kind=IMPULSE, level=0.3, b=3.2, r=0.01, t_c1=30.0, t_c2=60.0)

        self.assertEqual(series_checkpoints(shift, 10.0)[0], 45.0)


class DefaultTcTestCase(TestCase):
    """Test cases for default_tc_list."""

    def test_vdp_steps(self):
        """Test the van der Pol peak times around four periods."""
        values = default_tc_list("vdp", VDP_PERIOD)

        np.testing.assert_allclose(values, [4 * VDP_PERIOD + 0.11 * k for k in range(-1, 5)])

    def test_gly_steps(self):
        """Test the glycolysis peak times around four periods."""
        values = default_tc_list("gly", 308.266)

        self.assertEqual(len(values), 7)
        self.assertAlmostEqual(values[3], 4 * 308.266)
        self.assertAlmostEqual(values[1] - values[0], 15.0)


@patch("tipping.diagrams.check_start", new=lambda *args: 0.0)
class DiagramTestCase(TestCase):
    """Test cases for tipping_diagram and the critical rates."""

    def setUp(self):
        """Set up test fixtures."""
        self.path = vdp_path()

    def diagram(self, r_grid):
        return tipping_diagram(
            "vdp", self.path, MONOTONE, (4.0, 1.89), [0.5, 1.0], r_grid, 28.0, workers=1
        )

    @patch("tipping.diagrams.classify", rate_window(5.0, math.inf))
    def test_grid_layout(self):
        """Test that outcomes are arranged by magnitude and rate."""
        grid = self.diagram([1.0, 2.0, 8.0])

        self.assertEqual(grid.shape, (2, 3))
        self.assertEqual(grid.outcome(0, 2).kind, Outcome.TIP)
        self.assertEqual(grid.outcome(1, 0).kind, Outcome.TRACK)
        self.assertEqual(grid.t_c, 28.0)

    @patch("tipping.diagrams.classify", rate_window(5.0, math.inf))
    def test_single_critical_rate(self):
        """Test that one flip along r gives one critical rate, skipping failed cells."""
        grid = self.diagram([1.0, 2.0, 3.0, 8.0, 16.0])
        rates = critical_rates(grid, 1.0)

        self.assertEqual(grid.outcome(1, 2).kind, Outcome.INDETERMINATE)
        self.assertEqual(len(rates), 1)
        self.assertAlmostEqual(rates[0], 5.0, delta=5e-3)

    @patch("tipping.diagrams.classify", rate_window(0.8, 4.1))
    def test_tongue(self):
        """Test that a tipping tongue gives a lower and an upper critical rate."""
        grid = self.diagram(np.geomspace(0.1, 30.0, 12))
        curve = critical_rate_curve(grid)

        lower, upper = curve.at(1.0)
        self.assertAlmostEqual(lower, 0.8, delta=1e-3)
        self.assertAlmostEqual(upper, 4.1, delta=5e-3)
        self.assertEqual(len(curve), 2)

    @patch("tipping.diagrams.classify", rate_window(5.0, math.inf))
    def test_magnitude_off_the_grid(self):
        """Test that critical rates can be asked for a magnitude off the grid."""
        grid = self.diagram([1.0, 2.0, 8.0])

        self.assertEqual(len(critical_rates(grid, 0.75)), 1)

    def test_tipping_phases(self):
        """Test that a pace grid column lists its tipping phases."""
        tip = Outcome(kind=Outcome.TIP, attractor=GAMMA2)
        track = Outcome(kind=Outcome.TRACK, attractor=GAMMA1)
        grid = TippingGrid(
            row_name="phi",
            rows=np.array([0.0, 1.0, 2.0]),
            cols=np.array([1.0]),
            outcomes=((track,), (tip,), (track,)),
            t_c=28.0,
        )

        np.testing.assert_array_equal(tipping_phases(grid, 0), [False, True, False])


@patch("tipping.diagrams.boundary_at", drifting_boundary)
@patch("tipping.diagrams.classify", always_track)
class PaceTestCase(TestCase):
    """Test cases for pace_vs_phase and tc_sweep."""

    def setUp(self):
        """Set up test fixtures."""
        self.path = vdp_path()

    def test_pace_grid_overlay(self):
        """Test that the overlay marks the phases outside the far basin."""
        phi_grid = TWO_PI * np.arange(8) / 8
        grid = pace_vs_phase("vdp", self.path, MONOTONE, 1.0, [1.0, 10.0], phi_grid, 28.0, workers=1)
        edge = math.acos(1.0 / 6.0)

        self.assertEqual(grid.shape, (8, 2))
        self.assertEqual(grid.row_name, "phi")
        self.assertEqual(grid.extra, {"b": 1.0})
        np.testing.assert_array_equal(grid.overlay, [False, False, True, True, True, True, True, False])
        self.assertEqual(len(grid.arcs.arcs), 1)
        start, end = grid.arcs.arcs[0]
        self.assertAlmostEqual(start, edge, delta=1e-2)
        self.assertAlmostEqual(end, TWO_PI - edge, delta=1e-2)

    def test_starts_follow_the_phase(self):
        """Test that each row starts at its phase on the base cycle."""
        starts = []

        def record(model, path, shift, x0, cfg=None):
            starts.append(tuple(x0))
            return always_track(model, path, shift, x0)

        with patch("tipping.diagrams.classify", record):
            pace_vs_phase("vdp", self.path, MONOTONE, 1.0, [1.0], [0.0, 0.5 * np.pi], 28.0, workers=1)

        np.testing.assert_allclose(starts, [(4.0, 0.0), (0.0, -4.0)], atol=1e-3)

    @patch("tipping.diagrams.check_start", new=lambda *args: 0.0)
    def test_tc_sweep_default_peaks(self):
        """Test that the sweep makes one diagram per default peak time."""
        grids = tc_sweep("vdp", self.path, MONOTONE, (4.0, 0.0), [0.5], [1.0, 2.0], workers=1)

        np.testing.assert_allclose([grid.t_c for grid in grids], default_tc_list("vdp", TWO_PI))
        self.assertTrue(all(grid.shape == (1, 2) for grid in grids))

    @patch("tipping.diagrams.check_start", new=lambda *args: 0.0)
    def test_tc_sweep_given_peaks(self):
        """Test that explicit peak times are kept in order."""
        grids = tc_sweep("vdp", self.path, NONMONOTONE, (4.0, 0.0), [0.5], [1.0], t_c_list=[30.0, 20.0], workers=1)

        self.assertEqual([grid.t_c for grid in grids], [30.0, 20.0])


@pytest.mark.slow
class VdpTippingTestCase(TestCase):
    """Test cases for driven van der Pol runs."""

    def setUp(self):
        """Set up test fixtures."""
        self.path = vdp_path()
        self.t_c = 4.0 * VDP_PERIOD

    def outcome(self, kind, b, r, x0):
        return classify("vdp", self.path, self.path.shift(kind, b, r, self.t_c), x0).kind

    def test_monotone_track_and_tip(self):
        """Test that b = 1 tracks at r = 4 and tips at r = 13."""
        self.assertEqual(self.outcome(MONOTONE, 1.0, 4.0, (4.0, 1.89)), Outcome.TRACK)
        self.assertEqual(self.outcome(MONOTONE, 1.0, 13.0, (4.0, 1.89)), Outcome.TIP)

    def test_fast_shift_tips_past_a_magnitude(self):
        """Test that a near-instant shift tracks at b = 0.6 and tips at b = 0.66."""
        self.assertEqual(self.outcome(MONOTONE, 0.60, 100.0, (4.0, 1.89)), Outcome.TRACK)
        self.assertEqual(self.outcome(MONOTONE, 0.66, 100.0, (4.0, 1.89)), Outcome.TIP)

    def test_start_off_the_cycle(self):
        """Test that a start inside the cycle is refused."""
        with self.assertRaises(NotOnCycle):
            classify("vdp", self.path, self.path.shift(MONOTONE, 1.0, 4.0, self.t_c), (1.0, 0.0))

    def test_nonmonotone_tongues(self):
        """Test the alternating outcomes of the pulse at b = 1.25."""
        expected = [Outcome.TRACK, Outcome.TIP, Outcome.TRACK, Outcome.TIP, Outcome.TRACK]
        found = [self.outcome(NONMONOTONE, 1.25, r, (4.503, 2.33)) for r in (0.5, 1.0, 2.0, 6.0, 12.0)]

        self.assertEqual(found, expected)

    def test_critical_rate_counts(self):
        """Test four critical rates at b = 1.25 and two at b = 1."""
        grid = tipping_diagram(
            "vdp",
            self.path,
            NONMONOTONE,
            (4.503, 2.33),
            [1.0, 1.25],
            [0.3, 1.0, 2.0, 6.0, 20.0],
            self.t_c,
            workers=1,
        )

        self.assertEqual(len(critical_rates(grid, 1.25)), 4)
        lower, upper = critical_rates(grid, 1.0)
        self.assertLess(lower, 1.0)
        self.assertGreater(upper, 1.0)

    def test_zero_magnitude_always_tracks(self):
        """Test that without a shift every phase and rate tracks."""
        grid = pace_vs_phase(
            "vdp", self.path, MONOTONE, 0.0, [1.0, 10.0], [0.0, 2.0, 4.0], self.t_c, workers=1
        )

        self.assertFalse(grid.tip_mask().any())
        self.assertFalse(grid.overlay.any())

    def test_series_of_tipping(self):
        """Test the basin sequences of the long-path impulse."""
        path = ParameterPath(
            model="vdp",
            param="mu",
            base=VdpParams(mu=3.5, alpha=0.0938, beta=0.00194, d=-0.04),
            p_plus=3.5,
            p_minus=0.3,
        )
        shift = path.impulse(27.0, 30.0, 60.0)
        starts = [(6.45, -0.858), (5.77, -2.372), (6.5726, -0.0013), (-2.7483, -5.9173)]
        found = series_demo("vdp", path, shift, starts, workers=1)

        self.assertEqual(
            [item.sequence for item in found],
            [(GAMMA1, GAMMA1), (GAMMA1, GAMMA2), (GAMMA2, GAMMA2), (GAMMA2, GAMMA1)],
        )


@pytest.mark.slow
class GlyTippingTestCase(TestCase):
    """Test cases for driven glycolysis runs."""

    def setUp(self):
        """Set up test fixtures."""
        self.path = ParameterPath(
            model="gly",
            param="sigma_i",
            base=GlyParams(v=0.275, sigma_i=1.226),
            p_plus=1.226,
            p_minus=0.7,
            slave="gly_diagonal",
            base_cycle=GAMMA2,
            fold_magnitude=0.526,
        )
        self.t_c = 4.0 * 308.266

    def test_monotone_track_and_tip(self):
        """Test that b = 0.35 tracks at r = 0.01 and tips at r = 0.08."""
        slow = self.path.shift(MONOTONE, 0.35, 0.01, self.t_c)
        fast = self.path.shift(MONOTONE, 0.35, 0.08, self.t_c)

        self.assertEqual(classify("gly", self.path, slow, (75.71, 2.76)).kind, Outcome.TRACK)
        self.assertEqual(classify("gly", self.path, fast, (75.71, 2.76)).kind, Outcome.TIP)

    def test_nonmonotone_tongue(self):
        """Test that the pulse at b = 0.37 tips only at intermediate rates."""
        found = [
            classify("gly", self.path, self.path.shift(NONMONOTONE, 0.37, r, self.t_c), (68.91, 8.61)).kind
            for r in (0.01, 0.032, 0.09)
        ]

        self.assertEqual(found, [Outcome.TRACK, Outcome.TIP, Outcome.TRACK])
