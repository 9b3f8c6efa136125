"""Tests for the bifurcation scans."""

import tempfile
from pathlib import Path
from unittest import TestCase
from unittest.mock import patch

import numpy as np
import pytest

from birhythm.exceptions import NoConvergence
from oscillators.cycles import REGION_I, REGION_UNKNOWN, STABLE, UNSTABLE, Equilibrium
from oscillators.models import GlyParams, State, VdpParams
from oscillators.scans import (
    FOLD_INNER,
    FOLD_OUTER,
    HOPF,
    BranchTable,
    CellSummary,
    CycleSketch,
    TwoParamScan,
    _fold_pair,
    chain,
    closest_pair,
    first_lyapunov,
    lyapunov_sign_change,
    scan_one_param,
    scan_two_param,
    survey_cell,
    switch_point,
)


def sketch(amplitude):
    return CycleSketch(
        amplitude=amplitude,
        period=7.0,
        crossing=State(amplitude, 0.0),
        x_max=amplitude,
        x_min=-amplitude,
    )


def equilibrium(stability=UNSTABLE):
    return Equilibrium(location=State(0.0, 0.0), eigenvalues=(1j, -1j), stability=stability)


class HelpersTestCase(TestCase):
    """Test cases for the scan helpers."""

    def test_switch_point(self):
        """Test that bisection brackets the switch of a predicate."""
        found = switch_point(lambda value: value < 0.3, 0.0, 1.0, 1e-4)

        self.assertAlmostEqual(found, 0.3, delta=1e-4)

    def test_switch_point_downward(self):
        """Test that bisection works with the inside end above the outside end."""
        found = switch_point(lambda value: value > 0.7, 1.0, 0.0, 1e-4)

        self.assertAlmostEqual(found, 0.7, delta=1e-4)

    def test_switch_point_needs_a_bracket(self):
        """Test that ends on the same side of the switch are refused."""
        with self.assertRaises(NoConvergence):
            switch_point(lambda value: value < 0.3, 0.5, 1.0, 1e-4)

    def test_lyapunov_sign_change(self):
        """Test that the sign change is interpolated between Hopf points."""
        line = [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (3.0, 2.0)]
        values = [-3.0, np.nan, -1.0, 3.0]

        self.assertEqual(lyapunov_sign_change(line, values), (2.25, 1.25))
        self.assertIsNone(lyapunov_sign_change(line, [-1.0, -2.0, np.nan, -1.0]))

    def test_chain_orders_by_neighbours(self):
        """Test that scattered points are chained along the curve."""
        points = [(2.0, 4.0), (0.0, 0.0), (3.0, 9.0), (1.0, 1.0)]

        np.testing.assert_array_equal(chain(points), [(0, 0), (1, 1), (2, 4), (3, 9)])

    def test_chain_empty(self):
        """Test that no points give an empty polyline."""
        self.assertEqual(chain([]).shape, (0, 2))

    def test_closest_pair(self):
        """Test that the closest pair is reported by its midpoint."""
        first = [(0.0, 0.0), (1.0, 1.0)]
        second = [(1.2, 1.0), (5.0, 5.0)]

        np.testing.assert_allclose(closest_pair(first, second), (1.1, 1.0))
        self.assertIsNone(closest_pair(first, []))


class FoldPairTestCase(TestCase):
    """Test cases for _fold_pair."""

    def test_inner_cycle_vanishes(self):
        """Test that losing the small cycle is an inner fold."""
        more = CellSummary(region=REGION_I, equilibrium=equilibrium(), cycles=(sketch(1.0), sketch(4.0)))
        fewer = CellSummary(region="IV", equilibrium=equilibrium(), cycles=(sketch(4.1),))
        vanishing, survivor, kind = _fold_pair(more, fewer)

        self.assertEqual(kind, FOLD_INNER)
        self.assertEqual(vanishing.amplitude, 1.0)
        self.assertEqual(survivor.amplitude, 4.1)

    def test_outer_cycle_vanishes(self):
        """Test that losing the large cycle is an outer fold."""
        more = CellSummary(region=REGION_I, equilibrium=equilibrium(), cycles=(sketch(1.0), sketch(4.0)))
        fewer = CellSummary(region="II", equilibrium=equilibrium(), cycles=(sketch(1.1),))

        self.assertEqual(_fold_pair(more, fewer)[2], FOLD_OUTER)

    def test_last_cycle_vanishes(self):
        """Test that losing the only cycle has no survivor."""
        more = CellSummary(region="II", equilibrium=equilibrium(STABLE), cycles=(sketch(2.0),))
        fewer = CellSummary(region="III", equilibrium=equilibrium(STABLE))

        self.assertEqual(_fold_pair(more, fewer), (sketch(2.0), None, FOLD_OUTER))


class SurveyCellTestCase(TestCase):
    """Test cases for survey_cell."""

    def test_failure_is_unknown(self):
        """Test that a failed survey gives an unknown cell instead of raising."""
        with patch("oscillators.scans.survey", side_effect=NoConvergence("singular")):
            cell = survey_cell("vdp", VdpParams(mu=1.0), None, {"mu": 2.0})

        self.assertEqual(cell.region, REGION_UNKNOWN)
        self.assertFalse(cell.known)


class LyapunovTestCase(TestCase):
    """Test cases for first_lyapunov."""

    def test_vdp_hopf_point(self):
        """Test the van der Pol coefficient -mu/8 at the Hopf point mu = d."""
        params = VdpParams(mu=0.05, alpha=0.093, beta=0.0019, d=0.05)

        self.assertAlmostEqual(first_lyapunov("vdp", params), -0.05 / 8.0, delta=1e-5)

    def test_classical_oscillator_scales_with_mu(self):
        """Test that the coefficient of the classical oscillator is -mu/8."""
        for mu in (0.02, 0.1, 0.4):
            with self.subTest(mu=mu):
                params = VdpParams(mu=mu, alpha=0.0, beta=0.0, d=mu)
                self.assertAlmostEqual(first_lyapunov("vdp", params), -mu / 8.0, delta=1e-5)

    def test_saddle_is_refused(self):
        """Test that an equilibrium without rotation has no coefficient."""
        with patch("oscillators.scans.jacobian", return_value=np.array([[1.0, 0.0], [0.0, -1.0]])):
            with self.assertRaises(NoConvergence):
                first_lyapunov("vdp", VdpParams(mu=1.0), equilibrium=(0.0, 0.0))


class TablesTestCase(TestCase):
    """Test cases for the scan result records."""

    def test_branch_rows(self):
        """Test that branch rows name both cycles and every transition."""
        table = BranchTable(
            param="mu",
            values=np.array([1.0]),
            cells=(CellSummary(region=REGION_I, equilibrium=equilibrium(), cycles=(sketch(1.0), sketch(4.0))),),
            transitions=((FOLD_INNER, 0.5), (HOPF, 0.2)),
        )
        branches = {branch for _, branch, _ in table.branch_rows()}

        self.assertTrue({"e0_x", "gamma1_max", "gamma2_min", FOLD_INNER, HOPF} <= branches)
        self.assertEqual(table.folds(), [0.5])
        np.testing.assert_array_equal(table.birhythmic_values, [1.0])

    def test_two_param_csv(self):
        """Test that a plane scan writes the region grid and one CSV per curve."""
        scan = TwoParamScan(
            p1_name="v",
            p1_values=np.array([0.3, 0.4]),
            p2_name="sigma_i",
            p2_values=np.array([1.0]),
            regions=(("I",), ("II",)),
            polylines={HOPF: np.array([[0.39, 0.52]])},
            gh=(0.39, 0.52),
        )
        with tempfile.TemporaryDirectory() as tmp:
            paths = scan.to_csv(Path(tmp))
            names = [path.name for path in paths]
            regions = paths[0].read_text().splitlines()

        self.assertEqual(names, ["regions.csv", "hopf.csv", "fold_inner.csv", "fold_outer.csv", "gh.csv"])
        self.assertEqual(regions, ["p1,p2,region", "0.3,1.0,I", "0.4,1.0,II"])
        self.assertEqual(scan.labels(), {"I", "II"})


@pytest.mark.slow
class ScanTestCase(TestCase):
    """Test cases for the scans on the two models."""

    def test_vdp_birhythmic_window(self):
        """Test that the van der Pol mu scan at d = 0.05 opens the window at an outer fold."""
        table = scan_one_param("vdp", VdpParams(mu=1.0, d=0.05), "mu", 0.1, 1.0, 19, workers=1)
        window = table.birhythmic_values

        self.assertGreater(len(window), 0)
        self.assertEqual(window.max(), 1.0)
        folds = table.folds(FOLD_OUTER)
        self.assertEqual(len(folds), 1)
        self.assertLess(folds[0], window.min())
        self.assertAlmostEqual(folds[0], 0.37, delta=0.02)

    def test_single_value_scan(self):
        """Test that an empty range scans one value."""
        table = scan_one_param("vdp", VdpParams(mu=1.0, d=-0.001), "mu", 1.0, 1.0, workers=1)

        self.assertEqual(len(table.values), 1)
        self.assertEqual(table.cells[0].region, REGION_I)

    def test_gly_generalized_hopf(self):
        """Test that the glycolysis plane scan places the generalized Hopf point."""
        scan = scan_two_param(
            "gly",
            GlyParams(v=0.3, sigma_i=1.0),
            ("v", np.linspace(0.35, 0.43, 9)),
            ("sigma_i", np.linspace(0.45, 0.6, 7)),
        )

        self.assertIsNotNone(scan.gh)
        self.assertLess(np.hypot(scan.gh[0] - 0.3914, scan.gh[1] - 0.5195), 0.02)
        finite = scan.lyapunov[np.isfinite(scan.lyapunov)]
        self.assertTrue((finite < 0).any() and (finite > 0).any())
