"""
Run configuration.

A run is described by a JSON document::

    {
        "preset": "vdp_monotone_tipping",
        "model": "vdp",
        "params": {"mu": 1.52, "d": -0.03},
        "path": {"param": "mu", "p_plus": 1.52, "p_minus": 0.3},
        "shift": {"kind": "monotone", "a": 1.52, "b": 1.0, "r": 4.0},
        "analysis": {"x0": [4.0, 1.89]},
        "integrator": {"rel_tol": 1e-9},
        "output": "output/vdp_monotone",
        "workers": 8,
        "seed": 0
    }

``preset`` names a shipped file in ``birhythm/fixtures``; the document's own
keys are merged over it. Command-line ``--set key.sub=value`` overrides are
applied last, the value being parsed as JSON when possible.
"""

import copy
import json
import logging
from pathlib import Path

import numpy as np

from birhythm import settings
from birhythm.exceptions import ConfigError
from oscillators.integrate import IntegratorConfig
from oscillators.models import get_model
from tipping.forcing import GAMMA1, InputShift, ParameterPath

logger = logging.getLogger(__name__)

AXIS_KEYS = {"name": None, "start": None, "stop": None, "num": None, "scale": None, "values": None}

SCHEMA = {
    "preset": None,
    "description": None,
    "model": None,
    "params": {
        "mu": None,
        "alpha": None,
        "beta": None,
        "d": None,
        "v": None,
        "sigma_i": None,
        "K": None,
        "L": None,
        "sigma_M": None,
        "n": None,
        "q": None,
        "k_s": None,
    },
    "path": {
        "param": None,
        "p_plus": None,
        "p_minus": None,
        "slave": None,
        "base_cycle": None,
        "fold_magnitude": None,
    },
    "shift": {
        "kind": None,
        "a": None,
        "b": None,
        "r": None,
        "t_c": None,
        "t_c1": None,
        "t_c2": None,
        "base_level": None,
    },
    "analysis": {
        "x0": None,
        "x0_list": None,
        "t_span": None,
        "stride": None,
        "scan": {"param": None, "start": None, "stop": None, "resolution": None},
        "grid": {"p1": AXIS_KEYS, "p2": AXIS_KEYS},
        "b": None,
        "b_grid": AXIS_KEYS,
        "r_grid": AXIS_KEYS,
        "phi_grid": AXIS_KEYS,
        "t_c": None,
        "t_c_list": None,
        "far": None,
        "critical_b": None,
        "marginal": None,
        "fold_limit": None,
        "oracle_samples": None,
    },
    "integrator": {"rel_tol": None, "abs_tol": None, "max_step": None, "max_time": None},
    "output": None,
    "workers": None,
    "seed": None,
}

# Keys that never change results and stay out of the manifest hash
RUNTIME_KEYS = ("workers", "output")

SHIFT_NUMBERS = ("a", "b", "r", "t_c", "t_c1", "t_c2", "base_level")
INTEGER_PARAMS = ("n",)


def coerce(value, cast, key):
    """Convert ``value`` with ``cast``, naming ``key`` when it does not fit."""
    try:
        return cast(value)
    except (TypeError, ValueError):
        kind = "an integer" if cast is int else "a number"
        raise ConfigError(f"{key} must be {kind}, got {value!r}", key) from None


def coerce_vector(value, key):
    """A list of numbers as a float tuple."""
    if not isinstance(value, list | tuple):
        raise ConfigError(f"{key} must be a list of numbers, got {value!r}", key)
    return tuple(coerce(item, float, f"{key}[{index}]") for index, item in enumerate(value))


def _optional_number(spec, name, section):
    value = spec.get(name)
    return None if value is None else coerce(value, float, f"{section}.{name}")


def deep_merge(base, overlay):
    """Return ``base`` with ``overlay`` merged in, sections merged recursively."""
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate(data, schema=SCHEMA, prefix=""):
    """Reject keys the schema does not know, naming the first offender."""
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be a mapping", prefix.rstrip("."))
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown configuration key {dotted!r}", dotted)
        if schema[key] is not None and value is not None:
            validate(value, schema[key], f"{dotted}.")


def preset_path(name):
    return settings.FIXTURES_DIR / f"{name}.json"


def available_presets():
    return sorted(path.stem for path in settings.FIXTURES_DIR.glob("*.json"))


def _read(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"configuration file {path} not found", "config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", "config") from exc


def _resolve(data, seen=()):
    name = data.get("preset")
    if not name:
        return data
    if name in seen:
        raise ConfigError(f"preset {name!r} includes itself", "preset")
    path = preset_path(name)
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}", "preset")
    base = _resolve(_read(path), (*seen, name))
    merged = deep_merge(base, {key: value for key, value in data.items() if key != "preset"})
    merged["preset"] = name
    return merged


def parse_override(text):
    """Split ``key.sub=value`` into the dotted key and its parsed value."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value", key or text)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(data, key, value):
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{part!r} is not a section", key)
        node = child
    node[parts[-1]] = value


def load_config(source=None, overrides=()):
    """Load, merge and validate a run configuration.

    ``source`` is a JSON file path or the name of a shipped preset.
    """
    data = {}
    if source is not None:
        path = Path(source)
        data = _read(path) if path.suffix == ".json" or path.exists() else {"preset": str(source)}
    validate(data)
    data = _resolve(data)
    for text in overrides:
        key, value = parse_override(text)
        apply_override(data, key, value)
    validate(data)
    return RunConfig(data)


def build_axis(spec, key):
    """Grid values from an axis spec: explicit ``values`` or start/stop/num."""
    if spec is None:
        raise ConfigError(f"{key} is required for this analysis", key)
    if spec.get("values") is not None:
        values = np.asarray(coerce_vector(spec["values"], f"{key}.values"))
    else:
        missing = [part for part in ("start", "stop", "num") if spec.get(part) is None]
        if missing:
            raise ConfigError(f"{key} needs start, stop and num", f"{key}.{missing[0]}")
        start = coerce(spec["start"], float, f"{key}.start")
        stop = coerce(spec["stop"], float, f"{key}.stop")
        num = coerce(spec["num"], int, f"{key}.num")
        scale = spec.get("scale", "linear")
        if scale == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError("log axes need positive bounds", f"{key}.start")
            values = np.geomspace(start, stop, num)
        elif scale == "linear":
            values = np.linspace(start, stop, num)
        elif scale == "periodic":
            values = np.linspace(start, stop, num, endpoint=False)
        else:
            raise ConfigError(f"unknown axis scale {scale!r}", f"{key}.scale")
    if len(values) > 1 and not np.all(np.diff(values) > 0):
        raise ConfigError(f"{key} must be strictly increasing", key)
    return values


class RunConfig:
    """Validated run configuration with typed accessors."""

    def __init__(self, data):
        self.data = data

    def __repr__(self):
        return f"<RunConfig {self.data.get('preset') or self.data.get('model')}>"

    def section(self, name):
        return self.data.get(name) or {}

    def require(self, dotted, cast=None):
        """Value at ``dotted``, converted with ``cast`` when given."""
        node = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or node.get(part) is None:
                raise ConfigError(f"{dotted} is required for this analysis", dotted)
            node = node[part]
        return node if cast is None else coerce(node, cast, dotted)

    @property
    def model(self):
        return get_model(self.require("model"))

    def params(self):
        values = {
            name: coerce(value, int if name in INTEGER_PARAMS else float, f"params.{name}")
            for name, value in self.section("params").items()
            if value is not None
        }
        try:
            return self.model.params(**values)
        except TypeError as exc:
            raise ConfigError(f"incomplete parameter record: {exc}", "params") from exc

    def integrator(self):
        values = {
            name: coerce(value, float, f"integrator.{name}")
            for name, value in self.section("integrator").items()
            if value is not None
        }
        return IntegratorConfig(**values)

    def path(self):
        spec = self.section("path")
        return ParameterPath(
            model=self.model.name,
            param=spec.get("param", self.model.input_param),
            base=self.params(),
            p_plus=self.require("path.p_plus", float),
            p_minus=self.require("path.p_minus", float),
            slave=spec.get("slave"),
            base_cycle=spec.get("base_cycle", GAMMA1),
            fold_magnitude=_optional_number(spec, "fold_magnitude", "path"),
        )

    @property
    def has_shift(self):
        return bool(self.section("shift"))

    def shift(self, period=None):
        """Input law; a missing peak time defaults to four base periods."""
        spec = dict(self.section("shift"))
        for name in SHIFT_NUMBERS:
            if spec.get(name) is not None:
                spec[name] = coerce(spec[name], float, f"shift.{name}")
        if spec.get("t_c") is None and period is not None:
            spec["t_c"] = 4.0 * period
        return InputShift.from_config(spec)

    def analysis(self, key, default=None, cast=None):
        """Analysis setting ``key``, converted with ``cast`` when given."""
        value = self.section("analysis").get(key)
        if value is None:
            return default
        return value if cast is None else coerce(value, cast, f"analysis.{key}")

    def axis(self, key, default=None):
        spec = self.section("analysis").get(key, default)
        return build_axis(spec, f"analysis.{key}")

    def grid_axis(self, key):
        spec = self.require(f"analysis.grid.{key}")
        name = spec.get("name")
        if not name:
            raise ConfigError("grid axes need a parameter name", f"analysis.grid.{key}.name")
        return name, build_axis(spec, f"analysis.grid.{key}")

    @property
    def workers(self):
        return coerce(self.data.get("workers") or settings.WORKERS, int, "workers")

    @property
    def seed(self):
        return coerce(self.data.get("seed") or 0, int, "seed")

    @property
    def output(self):
        return Path(self.data.get("output") or settings.OUTPUT_DIR)

    def resolved(self):
        """Configuration as recorded in the manifest."""
        return {key: value for key, value in self.data.items() if key not in RUNTIME_KEYS}
