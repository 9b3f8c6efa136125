"""
Command-line front end.

Every subcommand reads a run configuration, runs one analysis and writes its
CSV files plus ``manifest.json`` into the output directory. Exit status is 0
on success, 1 for configuration errors and 2 for numerical failures.
"""

import argparse
import logging
import logging.config
import sys
from pathlib import Path

from birhythm import __version__, settings
from birhythm.config import available_presets, coerce, coerce_vector, load_config
from birhythm.exceptions import ConfigError, NumericalError
from birhythm.export import write_csv, write_manifest
from oscillators.cycles import amplitude_roots, label_survey, survey
from oscillators.integrate import integrate_autonomous, integrate_nonautonomous
from oscillators.phase import TWO_PI, build_phased_cycle
from oscillators.scans import fold_along_path, scan_one_param, scan_two_param
from tipping.basin import (
    bi_magnitude,
    bi_region,
    boundary_at,
    closest_approach,
    marginal_parameter,
    oracle_agreement,
    side_of,
    unstable_arcs,
)
from tipping.diagrams import (
    base_phased_cycle,
    critical_rate_curve,
    default_tc_list,
    pace_vs_phase,
    phase_of_start,
    series_demo,
    tc_sweep,
    tipping_diagram,
)
from tipping.forcing import IMPULSE
from tipping.models import SERIES_HEADER

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

DEFAULT_PHI_GRID = {"start": 0.0, "stop": TWO_PI, "num": 128, "scale": "periodic"}


def _x0(config, key="x0"):
    value = config.analysis(key)
    if value is None:
        raise ConfigError(f"analysis.{key} is required", f"analysis.{key}")
    return coerce_vector(value, f"analysis.{key}")


def _base_period(config):
    return base_phased_cycle(config.model, config.path(), config.integrator()).period


def _t_c(config):
    t_c = config.analysis("t_c", cast=float)
    return t_c if t_c is not None else 4.0 * _base_period(config)


def simulate(config, out):
    """Trajectory of the frozen or driven system."""
    model = config.model
    cfg = config.integrator()
    x0 = _x0(config)
    default_span = [0.0, 10.0 * model.time_scale]
    t_span = coerce_vector(config.analysis("t_span", default_span), "analysis.t_span")
    stride = config.analysis("stride", cast=float)
    if config.has_shift and config.shift(0.0).b != 0:
        path = config.path()
        needs_period = config.section("shift").get("t_c") is None
        shift = config.shift(_base_period(config) if needs_period else None)
        traj = integrate_nonautonomous(
            model, path.plus, shift, path.param, x0, t_span, cfg, path=path
        )
        rows = ((t, x, y, shift.at(t)) for t, x, y in traj.rows(stride))
        target = write_csv(out / "trajectory.csv", ["t", "x", "y", "p"], rows)
    elif config.has_shift:
        path = config.path()
        params = path.params_at(config.shift().level)
        traj = integrate_autonomous(model, params, x0, t_span, cfg)
        target = traj.to_csv(out / "trajectory.csv", stride)
    else:
        traj = integrate_autonomous(model, config.params(), x0, t_span, cfg)
        target = traj.to_csv(out / "trajectory.csv", stride)
    return [target], {"steps": len(traj), "final": [float(v) for v in traj.final]}


def _cycle_rows(result):
    named = []
    if result.birhythmic:
        named = [("gamma1", result.gamma1), ("gamma2", result.gamma2)]
    else:
        named = [(f"cycle{index}", cycle) for index, cycle in enumerate(result.cycles, 1)]
    if result.theta is not None:
        named.append(("theta", result.theta))
    return named


def cycles(config, out):
    """Equilibrium, stable cycles and separatrix at one parameter point."""
    model = config.model
    params = config.params()
    result = survey(model, params, config.integrator())
    named = _cycle_rows(result)
    rows = []
    outputs = []
    for name, cycle in named:
        extrema = cycle.extrema
        rows.append(
            (
                name,
                cycle.stability,
                cycle.period,
                cycle.amplitude,
                extrema["x_min"],
                extrema["x_max"],
                extrema["y_min"],
                extrema["y_max"],
                cycle.closure_error,
            )
        )
        outputs.append(build_phased_cycle(cycle).to_csv(out / f"{name}.csv"))
    header = ["name", "stability", "period", "amplitude", "x_min", "x_max", "y_min", "y_max"]
    outputs.insert(0, write_csv(out / "cycles.csv", [*header, "closure_error"], rows))
    x_e, y_e = result.equilibrium.location
    summary = {
        "region": label_survey(model, result),
        "equilibrium": [float(x_e), float(y_e)],
        "equilibrium_stability": result.equilibrium.stability,
    }
    if model.name == "vdp":
        roots = amplitude_roots(params)
        outputs.append(write_csv(out / "amplitude_roots.csv", ["root"], ((r,) for r in roots)))
        summary["amplitude_roots"] = roots
    return outputs, summary


def scan1d(config, out):
    """One-parameter bifurcation scan."""
    spec = config.require("analysis.scan")
    table = scan_one_param(
        config.model,
        config.params(),
        spec.get("param", config.model.input_param),
        config.require("analysis.scan.start", float),
        config.require("analysis.scan.stop", float),
        coerce(spec.get("resolution", 61), int, "analysis.scan.resolution"),
        config.integrator(),
        config.workers,
    )
    summary = {
        "transitions": [[kind, float(value)] for kind, value in table.transitions],
    }
    return [table.to_csv(out / "branches.csv")], summary


def scan2d(config, out):
    """Two-parameter region scan with Hopf and fold curves."""
    scan = scan_two_param(
        config.model,
        config.params(),
        config.grid_axis("p1"),
        config.grid_axis("p2"),
        config.integrator(),
        config.workers,
    )
    summary = {
        "regions": sorted(scan.labels()),
        "gh": list(scan.gh) if scan.gh is not None else None,
    }
    return scan.to_csv(out), summary


def basin_region(config, out):
    """Basin-instability region of the base cycle and the marginal onset."""
    model = config.model
    cfg = config.integrator()
    path = config.path()
    base = base_phased_cycle(model, path, cfg)
    region = bi_region(
        model,
        base,
        config.params(),
        config.grid_axis("p1"),
        config.grid_axis("p2"),
        path.base_cycle,
        cfg,
        config.workers,
    )
    summary = {
        flag: region.count(flag)
        for flag in ("none", "partial", "total", "marginal", "outside")
    }
    if config.analysis("marginal", False):
        summary["onset"] = marginal_parameter(base, path, cfg)
    samples = config.analysis("oracle_samples", cast=int)
    if samples:
        summary["oracle_agreement"] = oracle_agreement(
            model, path.plus, samples, config.seed, cfg, config.workers
        )
    fold_limit = config.analysis("fold_limit", cast=float)
    if fold_limit is not None:
        summary["fold_magnitude"] = fold_along_path(model, path, cfg, fold_limit)
    return [region.to_csv(out / "bi_region.csv")], summary


def arcs(config, out):
    """Basin-unstable arcs of the base cycle against one far point."""
    model = config.model
    cfg = config.integrator()
    path = config.path()
    base = base_phased_cycle(model, path, cfg)
    far = config.analysis("far", path.p_minus, cast=float)
    boundary = boundary_at(model, path.params_at(far), cfg)
    side = side_of(path.base_cycle)
    found = unstable_arcs(base, boundary, side)
    t_close, distance = closest_approach(base, boundary, side)
    outputs = [
        found.to_csv(out / "arcs.csv"),
        base.to_csv(out / "base.csv"),
        build_phased_cycle(boundary.theta).to_csv(out / "theta.csv"),
    ]
    summary = {
        "kind": found.kind,
        "period": base.period,
        "closest_time": t_close,
        "closest_distance": distance,
    }
    return outputs, summary


def _shift_kind(config):
    return config.section("shift").get("kind", "monotone")


def _diagram_summary(model, path, x0, cfg):
    summary = {}
    try:
        summary["x0_phase"] = phase_of_start(model, path, x0, cfg)
    except NumericalError as exc:
        summary["x0_phase"] = type(exc).__name__
    try:
        summary["b_bi"] = bi_magnitude(model, path, x0, cfg)
    except NumericalError as exc:
        summary["b_bi"] = type(exc).__name__
    return summary


def tipping(config, out):
    """Tipping diagram over magnitude and rate, with critical rates."""
    model = config.model
    cfg = config.integrator()
    path = config.path()
    x0 = _x0(config)
    t_c = _t_c(config)
    grid = tipping_diagram(
        model,
        path,
        _shift_kind(config),
        x0,
        config.axis("b_grid"),
        config.axis("r_grid"),
        t_c,
        cfg,
        config.workers,
    )
    outputs = [grid.to_csv(out / "tipping.csv")]
    critical_b = config.analysis("critical_b")
    if critical_b:
        critical_b = coerce_vector(critical_b, "analysis.critical_b")
    summary = {"t_c": t_c, **_diagram_summary(model, path, x0, cfg)}
    if critical_b:
        curve = critical_rate_curve(grid, list(critical_b))
        outputs.append(curve.to_csv(out / "critical_rates.csv"))
        summary["critical_rates"] = {str(b): list(found) for b, found in curve.rates}
    return outputs, summary


def tc_sweep_command(config, out):
    """Tipping diagrams for a list of peak times."""
    model = config.model
    cfg = config.integrator()
    path = config.path()
    t_c_list = config.analysis("t_c_list")
    if t_c_list is None:
        t_c_list = default_tc_list(model, _base_period(config))
    t_c_list = coerce_vector(t_c_list, "analysis.t_c_list")
    grids = tc_sweep(
        model,
        path,
        _shift_kind(config),
        _x0(config),
        config.axis("b_grid"),
        config.axis("r_grid"),
        list(t_c_list),
        cfg,
        config.workers,
    )
    outputs = [
        write_csv(out / "tc_list.csv", ["index", "t_c"], enumerate(map(float, t_c_list)))
    ]
    for index, grid in enumerate(grids):
        outputs.append(grid.to_csv(out / f"tipping_tc{index}.csv"))
    summary = {"tip_cells": [int(grid.tip_mask().sum()) for grid in grids]}
    return outputs, summary


def pace_phase(config, out):
    """Pace versus phase diagram with the basin-unstable phases."""
    model = config.model
    cfg = config.integrator()
    path = config.path()
    b = config.require("analysis.b", float)
    grid = pace_vs_phase(
        model,
        path,
        _shift_kind(config),
        b,
        config.axis("r_grid"),
        config.axis("phi_grid", DEFAULT_PHI_GRID),
        _t_c(config),
        cfg,
        config.workers,
    )
    overlay_rows = zip(map(float, grid.rows), map(int, grid.overlay), strict=True)
    outputs = [
        grid.to_csv(out / "pace.csv"),
        grid.arcs.to_csv(out / "arcs.csv"),
        write_csv(out / "overlay.csv", ["phi", "unstable"], overlay_rows),
    ]
    summary = {"b": b, "t_c": grid.t_c, "arc_kind": grid.arcs.kind}
    return outputs, summary


def series(config, out):
    """Impulse runs judged after each switch."""
    shift = config.shift()
    if shift.kind != IMPULSE:
        raise ConfigError("series needs an impulse shift", "shift.kind")
    x0_list = config.require("analysis.x0_list")
    found = series_demo(
        config.model,
        config.path(),
        shift,
        [
            coerce_vector(x0, f"analysis.x0_list[{index}]")
            for index, x0 in enumerate(x0_list)
        ],
        config.integrator(),
        config.workers,
    )
    target = write_csv(out / "series.csv", SERIES_HEADER, (item.row() for item in found))
    summary = {"sequences": [list(item.sequence) for item in found]}
    return [target], summary


COMMANDS = {
    "simulate": simulate,
    "cycles": cycles,
    "scan1d": scan1d,
    "scan2d": scan2d,
    "basin-region": basin_region,
    "arcs": arcs,
    "tipping-diagram": tipping,
    "tc-sweep": tc_sweep_command,
    "pace-phase": pace_phase,
    "series": series,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="JSON run configuration, or the name of a shipped preset"
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a configuration key, e.g. analysis.b=1.25",
    )
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("--seed", type=int, help="seed for the basin oracle samples")

    parser = argparse.ArgumentParser(
        prog="birhythm",
        description="Rate-induced phase tipping in birhythmic oscillators.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--list-presets", action="store_true", help="print the shipped presets and exit"
    )
    commands = parser.add_subparsers(dest="command")
    for name, handler in COMMANDS.items():
        commands.add_parser(name, parents=[common], help=handler.__doc__)
    return parser


def run(command, source=None, overrides=(), out=None, workers=None, seed=None):
    """Run one subcommand and return the manifest path."""
    overrides = list(overrides)
    if workers is not None:
        overrides.append(f"workers={workers}")
    if seed is not None:
        overrides.append(f"seed={seed}")
    if out is not None:
        overrides.append(f"output={Path(out).as_posix()}")
    config = load_config(source, overrides)
    directory = config.output
    directory.mkdir(parents=True, exist_ok=True)
    logger.info("%s -> %s", command, directory)
    outputs, summary = COMMANDS[command](config, directory)
    return write_manifest(directory, command, config.resolved(), outputs, summary)


def main(argv=None):
    logging.config.dictConfig(settings.LOGGING)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_presets:
        print("\n".join(available_presets()))
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        run(args.command, args.config, args.overrides, args.out, args.workers, args.seed)
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
