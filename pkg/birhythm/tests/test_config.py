"""Tests for run configuration loading."""

import json
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from birhythm.config import (
    apply_override,
    available_presets,
    build_axis,
    coerce,
    coerce_vector,
    deep_merge,
    load_config,
    parse_override,
    validate,
)
from birhythm.exceptions import ConfigError, ParameterError
from tipping.forcing import GAMMA2, NONMONOTONE


class MergeTestCase(TestCase):
    """Test cases for deep_merge and overrides."""

    def test_deep_merge_merges_sections(self):
        """Test that nested sections are merged key by key."""
        base = {"params": {"mu": 1.0, "d": -0.03}, "model": "vdp"}
        merged = deep_merge(base, {"params": {"mu": 2.0}})

        self.assertEqual(merged, {"params": {"mu": 2.0, "d": -0.03}, "model": "vdp"})
        self.assertEqual(base["params"]["mu"], 1.0)

    def test_parse_override_reads_json(self):
        """Test that override values are parsed as JSON when possible."""
        self.assertEqual(parse_override("analysis.b=1.25"), ("analysis.b", 1.25))
        self.assertEqual(parse_override("analysis.x0=[4, 1.89]"), ("analysis.x0", [4, 1.89]))
        self.assertEqual(parse_override("model=vdp"), ("model", "vdp"))

    def test_parse_override_requires_equals(self):
        """Test that an override without a value is rejected."""
        with self.assertRaises(ConfigError):
            parse_override("analysis.b")

    def test_apply_override_creates_sections(self):
        """Test that a dotted override creates missing sections."""
        data = {}
        apply_override(data, "shift.b", 0.5)

        self.assertEqual(data, {"shift": {"b": 0.5}})

    def test_apply_override_rejects_scalar_parent(self):
        """Test that overriding below a scalar key fails."""
        with self.assertRaises(ConfigError):
            apply_override({"model": "vdp"}, "model.name", "gly")


class CoerceTestCase(TestCase):
    """Test cases for coerce and coerce_vector."""

    def test_coerce(self):
        """Test that convertible values pass and others name their key."""
        self.assertEqual(coerce("3", int, "workers"), 3)
        with self.assertRaises(ConfigError) as ctx:
            coerce(None, float, "shift.b")

        self.assertEqual(ctx.exception.key, "shift.b")
        self.assertIn("must be a number", str(ctx.exception))

    def test_coerce_vector(self):
        """Test that a state must be a list of numbers."""
        self.assertEqual(coerce_vector([4, "1.89"], "analysis.x0"), (4.0, 1.89))
        with self.assertRaises(ConfigError) as ctx:
            coerce_vector(4.0, "analysis.x0")

        self.assertEqual(ctx.exception.key, "analysis.x0")


class ValidateTestCase(TestCase):
    """Test cases for schema validation."""

    def test_unknown_key_is_named(self):
        """Test that an unknown nested key is reported with its dotted path."""
        with self.assertRaises(ConfigError) as ctx:
            validate({"analysis": {"grid": {"p1": {"nmae": "d"}}}})

        self.assertEqual(ctx.exception.key, "analysis.grid.p1.nmae")

    def test_section_must_be_mapping(self):
        """Test that a scalar in place of a section is rejected."""
        with self.assertRaises(ConfigError):
            validate({"params": 3})

    def test_known_document_passes(self):
        """Test that a well-formed document validates."""
        validate({"model": "vdp", "params": {"mu": 1.0}, "workers": 2})


class PresetTestCase(TestCase):
    """Test cases for the shipped presets."""

    def test_every_preset_loads(self):
        """Test that every shipped preset resolves and validates."""
        presets = available_presets()

        self.assertIn("vdp_monotone_tipping", presets)
        for name in presets:
            with self.subTest(preset=name):
                config = load_config(name)
                self.assertIn(config.data["model"], ("vdp", "gly"))
                config.params()

    def test_preset_chain_is_merged(self):
        """Test that a preset naming another preset inherits its keys."""
        config = load_config("vdp_nonmonotone_tipping")

        self.assertEqual(config.data["analysis"]["x0"], [4.503, 2.33])
        self.assertEqual(config.data["path"]["fold_magnitude"], 1.273)
        self.assertEqual(config.shift(7.3133).kind, NONMONOTONE)
        self.assertEqual(config.data["preset"], "vdp_nonmonotone_tipping")

    def test_overrides_apply_last(self):
        """Test that command-line overrides win over the preset."""
        config = load_config("vdp_monotone_tipping", ["shift.b=0.5", "params.d=-0.04"])

        self.assertEqual(config.shift(7.0).b, 0.5)
        self.assertEqual(config.params().d, -0.04)

    def test_unknown_preset(self):
        """Test that an unknown preset name is a configuration error."""
        with self.assertRaises(ConfigError) as ctx:
            load_config("no_such_preset")

        self.assertEqual(ctx.exception.key, "preset")

    def test_file_over_preset(self):
        """Test that a config file is merged over the preset it names."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text(
                json.dumps({"preset": "gly_monotone_tipping", "analysis": {"t_c": 1200.0}})
            )
            config = load_config(path)

        self.assertEqual(config.analysis("t_c"), 1200.0)
        self.assertEqual(config.path().base_cycle, GAMMA2)
        self.assertAlmostEqual(config.path().plus.v, (3.11 - 1.226) / 6.86)

    def test_invalid_json_file(self):
        """Test that a malformed file is a configuration error."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("{")
            with self.assertRaises(ConfigError):
                load_config(path)


class RunConfigTestCase(TestCase):
    """Test cases for RunConfig accessors."""

    def setUp(self):
        """Set up test fixtures."""
        self.config = load_config("vdp_monotone_tipping", ["workers=3", "output=out/a"])

    def test_shift_peak_defaults_to_four_periods(self):
        """Test that a missing peak time becomes four base periods."""
        self.assertAlmostEqual(self.config.shift(7.0).t_c, 28.0)

    def test_resolved_drops_runtime_keys(self):
        """Test that workers and output stay out of the recorded configuration."""
        resolved = self.config.resolved()

        self.assertNotIn("workers", resolved)
        self.assertNotIn("output", resolved)
        self.assertEqual(self.config.workers, 3)
        self.assertEqual(self.config.output, Path("out/a"))

    def test_missing_required_key(self):
        """Test that require names the missing dotted key."""
        with self.assertRaises(ConfigError) as ctx:
            self.config.require("analysis.b")

        self.assertEqual(ctx.exception.key, "analysis.b")

    def test_invalid_parameter_value(self):
        """Test that a bad parameter value surfaces as a configuration error."""
        config = load_config("vdp_monotone_tipping", ["params.mu=-1"])

        with self.assertRaises(ParameterError) as ctx:
            config.params()

        self.assertIn("mu", ctx.exception.errors)

    def test_missing_parameter(self):
        """Test that an incomplete parameter record is a configuration error."""
        config = load_config(None, ["model=gly", "params.v=0.3"])

        with self.assertRaises(ConfigError):
            config.params()

    def test_malformed_number_names_its_key(self):
        """Test that a non-numeric value is a configuration error naming its key."""
        cases = [
            ("analysis.b=abc", lambda config: config.require("analysis.b", float)),
            ("integrator.rel_tol=x", lambda config: config.integrator()),
            ("params.mu=fast", lambda config: config.params()),
            ("shift.r=quick", lambda config: config.shift(7.0)),
            ("path.p_plus=[1]", lambda config: config.path()),
            ("analysis.stride=wide", lambda config: config.analysis("stride", cast=float)),
        ]
        for override, access in cases:
            key = override.partition("=")[0]
            with self.subTest(key=key):
                config = load_config("vdp_monotone_tipping", [override])
                with self.assertRaises(ConfigError) as ctx:
                    access(config)
                self.assertEqual(ctx.exception.key, key)

    def test_numeric_strings_are_accepted(self):
        """Test that numbers given as strings are converted."""
        config = load_config("vdp_monotone_tipping", ['params.d="0.05"', 'workers="2"'])

        self.assertEqual(config.params().d, 0.05)
        self.assertEqual(config.workers, 2)

    def test_grid_axis_needs_name(self):
        """Test that a grid axis without a parameter name is rejected."""
        config = load_config(
            "vdp_scan2d", ['analysis.grid.p1={"start": 0, "stop": 1, "num": 3}']
        )

        with self.assertRaises(ConfigError):
            config.grid_axis("p1")


class BuildAxisTestCase(TestCase):
    """Test cases for grid axes."""

    def test_linear_axis(self):
        """Test that a linear axis includes both ends."""
        values = build_axis({"start": 0.0, "stop": 1.0, "num": 5}, "b_grid")

        np.testing.assert_allclose(values, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_log_axis(self):
        """Test that a log axis is geometric."""
        values = build_axis({"start": 0.1, "stop": 10.0, "num": 3, "scale": "log"}, "r_grid")

        np.testing.assert_allclose(values, [0.1, 1.0, 10.0])

    def test_periodic_axis_drops_endpoint(self):
        """Test that a periodic axis leaves out its stop value."""
        values = build_axis(
            {"start": 0.0, "stop": 2 * np.pi, "num": 4, "scale": "periodic"}, "phi_grid"
        )

        np.testing.assert_allclose(values, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2])

    def test_explicit_values(self):
        """Test that explicit values are used as given."""
        values = build_axis({"values": [1, 4, 13]}, "r_grid")

        np.testing.assert_array_equal(values, [1.0, 4.0, 13.0])

    def test_rejects_decreasing_values(self):
        """Test that axes must strictly increase."""
        with self.assertRaises(ConfigError):
            build_axis({"values": [2.0, 1.0]}, "r_grid")

    def test_rejects_log_of_zero(self):
        """Test that log axes need positive bounds."""
        with self.assertRaises(ConfigError):
            build_axis({"start": 0.0, "stop": 1.0, "num": 3, "scale": "log"}, "r_grid")

    def test_malformed_bounds(self):
        """Test that a non-numeric bound names the bound."""
        with self.assertRaises(ConfigError) as ctx:
            build_axis({"start": 0.1, "stop": "ten", "num": 3}, "analysis.r_grid")

        self.assertEqual(ctx.exception.key, "analysis.r_grid.stop")

    def test_malformed_values(self):
        """Test that a non-numeric entry names its index."""
        with self.assertRaises(ConfigError) as ctx:
            build_axis({"values": [1.0, "x"]}, "analysis.r_grid")

        self.assertEqual(ctx.exception.key, "analysis.r_grid.values[1]")

    def test_missing_axis(self):
        """Test that a missing axis is a configuration error."""
        with self.assertRaises(ConfigError):
            build_axis(None, "analysis.b_grid")
