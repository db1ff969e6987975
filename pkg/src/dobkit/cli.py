"""Command-line surface: bode, rootlocus, simulate and sweep to CSV.

All commands read a scenario configuration (see the README for the schema)
and write CSV.  Existing output files are never overwritten without
``--force``.  Numeric output uses shortest round-trip formatting, so a given
config and seed reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import copy
import os
import sys

import numpy as np

from . import freqdomain
from .plants import servo_alpha
from .scenario import ScenarioError, load_scenario
from .simulate import run


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dob",
        description="Disturbance-observer robust-control workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output CSV file")
        p.add_argument("--force", action="store_true",
                       help="overwrite an existing output file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the seed in the config")
        p.set_defaults(handler=handler)
        return p

    add("bode", cmd_bode,
        "servo-loop sensitivity frequency response to CSV")
    add("rootlocus", cmd_rootlocus,
        "closed-loop poles of the acceleration-based loop per outer gain")
    add("simulate", cmd_simulate, "run one scenario and log the trajectory")
    p = add("sweep", cmd_sweep,
            "run the scenario once per parameter value and summarize")
    p.add_argument("--param", default=None,
                   help="dotted config path to sweep, e.g. observer.L")
    p.add_argument("--values", default=None,
                   help="comma-separated values for --param")
    return parser


def _open_out(args):
    if os.path.exists(args.out) and not args.force:
        raise OSError(f"output file {args.out!r} exists; pass --force to overwrite")
    return open(args.out, "w", encoding="utf-8", newline="")


def _load(args):
    scenario = load_scenario(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ScenarioError("--seed: must be >= 0")
        scenario.seed = args.seed
    return scenario


def _servo_sensitivity_from(scenario):
    if scenario.plant_type != "servo":
        raise ScenarioError("plant.type: bode requires a servo plant")
    if scenario.observer["type"] != "dob1":
        raise ScenarioError("observer.type: bode requires a dob1 observer "
                            "(its gain sets the loop bandwidth)")
    plant = scenario.plant
    return freqdomain.servo_sensitivity(plant.g_v, scenario.observer["gain"],
                                        servo_alpha(plant))


def cmd_bode(args):
    scenario = _load(args)
    analysis = scenario.analysis
    omega_min = float(analysis.get("omega_min", 1e-1))
    omega_max = float(analysis.get("omega_max", 1e6))
    points = int(analysis.get("points", 400))
    response = freqdomain.bode(_servo_sensitivity_from(scenario),
                               omega_min, omega_max, points)
    with _open_out(args) as out:
        response.write_csv(out)
    return 0


def cmd_rootlocus(args):
    scenario = _load(args)
    if scenario.controller["type"] != "abc":
        raise ScenarioError("controller.type: rootlocus requires an abc "
                            "controller (its gains close the loop)")
    if scenario.observer["type"] != "dob1":
        raise ScenarioError("observer.type: rootlocus requires a dob1 "
                            "observer (its gain is the filter bandwidth)")
    grid = scenario.analysis.get("alpha_grid")
    if grid is None:
        grid = np.linspace(0.1, 5.0, 50).tolist()
    locus = freqdomain.root_locus_alpha(scenario.controller["kp"],
                                        scenario.controller["kd"],
                                        scenario.observer["gain"], grid)
    n_poles = locus[0][1].size
    with _open_out(args) as out:
        cols = ["alpha"]
        for i in range(n_poles):
            cols += [f"re_{i + 1}", f"im_{i + 1}"]
        out.write(",".join(cols) + "\n")
        for alpha, poles in locus:
            row = [repr(float(alpha))]
            for p in poles:
                row += [repr(float(p.real)), repr(float(p.imag))]
            out.write(",".join(row) + "\n")
    return 0


def cmd_simulate(args):
    scenario = _load(args)
    trajectory = run(scenario)
    with _open_out(args) as out:
        trajectory.write_csv(out)
    return 0


def _set_by_path(config, path, value):
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ScenarioError(f"--param: no config entry at {path!r}")
        node = node[key]
    if not isinstance(node, dict):
        raise ScenarioError(f"--param: no config entry at {path!r}")
    node[keys[-1]] = value


def cmd_sweep(args):
    import json

    with open(args.config, "r", encoding="utf-8") as fh:
        base = json.load(fh)
    if not isinstance(base, dict):
        raise ScenarioError("config: top level must be an object")
    sweep_spec = base.get("analysis", {}).get("sweep", {})
    param = args.param or sweep_spec.get("param")
    if not param:
        raise ScenarioError("--param: required (or set analysis.sweep.param)")
    if args.values is not None:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    else:
        values = sweep_spec.get("values")
    if not values:
        raise ScenarioError("--values: required (or set analysis.sweep.values)")

    rows = []
    for value in values:
        config = copy.deepcopy(base)
        _set_by_path(config, param, value)
        scenario = load_scenario(config)
        if args.seed is not None:
            scenario.seed = args.seed
        trajectory = run(scenario)
        tail = trajectory.err_norm[int(0.8 * trajectory.err_norm.size):]
        steady = float(np.mean(tail))
        peak_db, margin = _analysis_columns(scenario)
        rows.append((value, steady, peak_db, margin))

    with _open_out(args) as out:
        out.write("value,steady_err_norm,peak_sens_db,phase_margin_deg\n")
        for value, steady, peak_db, margin in rows:
            cells = [repr(float(value)), repr(steady),
                     "" if peak_db is None else repr(peak_db),
                     "" if margin is None else repr(margin)]
            out.write(",".join(cells) + "\n")
    return 0


def _analysis_columns(scenario):
    """Peak sensitivity and phase margin where the scenario defines them."""
    peak_db = None
    margin = None
    if scenario.plant_type == "servo" and scenario.observer["type"] == "dob1":
        plant = scenario.plant
        alpha = servo_alpha(plant)
        sens = freqdomain.servo_sensitivity(plant.g_v,
                                            scenario.observer["gain"], alpha)
        grid = np.logspace(0, 6, 2401)
        peak_db = float(np.max(20.0 * np.log10(np.abs(sens(1j * grid)))))
        if scenario.controller["type"] == "abc":
            loop = freqdomain.abc_loop_tf(scenario.controller["kp"],
                                          scenario.controller["kd"],
                                          scenario.observer["gain"], alpha)
            result = freqdomain.margins(loop)
            if result.has_gain_crossover:
                margin = float(result.phase_margin_deg)
    return peak_db, margin


if __name__ == "__main__":
    sys.exit(main())
