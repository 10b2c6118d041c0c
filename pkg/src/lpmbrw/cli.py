"""Command-line entry point: ``lpmbrw {constants,simulate,experiment,report}``.

Exit codes: 0 success (all gating reports pass), 1 a gating report failed,
2 bad configuration or model, 3 population cap or numerical failure.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .engine import simulate, write_summary_csv
from .errors import (AssumptionViolated, ConfigError, InvalidMu, InvalidRegime, LpmBrwError,
                     NumericFailure, OutOfDomain, PopulationCapExceeded)
from .experiments import BINARY_GAUSSIAN, KINDS, ExperimentConfig, default_config, run_experiment
from .model import make_model, sigma_sq
from .plotting import render
from .reports import TestReport
from .rng import RngStream

OUTPUT_ENV = "LPMBRW_OUTPUT_DIR"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("lpmbrw")


def _load_json_arg(text):
    """``text`` is either inline JSON or a path to a JSON file."""
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--model is neither a file nor valid JSON ({exc})") from None


def _model_arg(args):
    return make_model(_load_json_arg(args.model) if args.model else BINARY_GAUSSIAN)


def _default_dir(name):
    return os.path.join(os.environ.get(OUTPUT_ENV, "results"), name)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_constants(args):
    model = _model_arg(args)
    for t in args.grid:
        print(f"nu({t:g}) = {model.nu(t):.6f}")
    res = model.theta0(search_max=args.search_max)
    if not res.finite:
        print(f"theta0: unbounded within search_max={res.search_max:g}")
        return EXIT_OK
    t0 = res.theta0
    print(f"theta0 = {t0:.6f}")
    print(f"nu(theta0)/theta0 = {res.nu_theta0 / t0:.6f}")
    print(f"1/(2 theta0) = {1 / (2 * t0):.6f}")
    print(f"3/(2 theta0) = {3 / (2 * t0):.6f}")
    print(f"sigma^2 = {sigma_sq(model, rng=RngStream(args.seed)):.6f}")
    return EXIT_OK


def cmd_simulate(args):
    model = _model_arg(args)
    res = model.theta0()
    grid = list(args.theta or [])
    traj = simulate(model, args.n, RngStream(args.seed), cap=args.cap, theta_grid=grid,
                    track_derivative=res.finite)
    out = args.output_dir or _default_dir("simulate")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "trajectory_summary.csv")
    write_summary_csv(traj, path)
    print(f"population {traj.population}, rightmost {traj.rightmost[-1]:.6f}")
    print(f"wrote {path}")
    return EXIT_OK


def _apply_overrides(cfg, args):
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.n:
        d["n"] = args.n
    if args.theta:
        d["thetas"] = args.theta
    if args.replications is not None:
        d["replications"] = args.replications
    if args.output_dir:
        d["output_dir"] = args.output_dir
    if args.alpha is not None:
        d["alpha"] = args.alpha
    if args.cap is not None:
        d["cap"] = args.cap
    if not d.get("output_dir"):
        d["output_dir"] = _default_dir(d["kind"])
    return ExperimentConfig.from_dict(d)


def cmd_experiment(args):
    if (args.config is None) == (args.default is None):
        raise ConfigError("give exactly one of CONFIG or --default KIND")
    cfg = default_config(args.default) if args.default else ExperimentConfig.load(args.config)
    cfg = _apply_overrides(cfg, args)
    result = run_experiment(cfg, threads=args.threads)
    for rep in result.reports:
        print(rep.line() + ("" if rep.gating else " (informational)"))
    print(f"results in {cfg.output_dir}")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_report(args):
    cfg_path = os.path.join(args.directory, "config.json")
    if not os.path.exists(cfg_path):
        raise ConfigError(f"{args.directory} has no config.json")
    cfg = ExperimentConfig.load(cfg_path)
    if render(args.directory, cfg.kind):
        print(f"re-rendered {cfg.kind} figures in {args.directory}")
    rep_path = os.path.join(args.directory, "reports.json")
    ok = True
    if os.path.exists(rep_path):
        with open(rep_path) as fh:
            for d in json.load(fh):
                rep = TestReport.from_json_dict(d)
                ok &= rep.passed or not rep.gating
                print(rep.line())
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _positive_float(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _theta(text):
    return "theta0" if text == "theta0" else _positive_float(text)


def build_parser():
    p = argparse.ArgumentParser(prog="lpmbrw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lpmbrw {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    model_help = "model spec as inline JSON or a JSON file (default: binary offspring, N(0,1))"

    c = sub.add_parser("constants", help="print theta0, log-correction coefficients, sigma^2")
    c.add_argument("--model", help=model_help)
    c.add_argument("--grid", type=float, nargs="*", default=[0.5, 1.0, 2.0])
    c.add_argument("--search-max", type=_positive_float, default=64.0)
    c.add_argument("--seed", type=int, default=0, help="seed for Monte Carlo sigma^2")
    c.set_defaults(func=cmd_constants)

    s = sub.add_parser("simulate", help="simulate one trajectory and dump per-generation summaries")
    s.add_argument("--model", help=model_help)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--theta", type=_positive_float, nargs="*")
    s.add_argument("--cap", type=int, default=1 << 27)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a configured experiment")
    e.add_argument("config", nargs="?", help="experiment config JSON")
    e.add_argument("--default", choices=KINDS, help="use the built-in config for KIND")
    e.add_argument("--seed", type=int)
    e.add_argument("--n", type=int, nargs="+")
    e.add_argument("--theta", type=_theta, nargs="+")
    e.add_argument("--replications", type=int)
    e.add_argument("--alpha", type=float)
    e.add_argument("--cap", type=int)
    e.add_argument("--output-dir")
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="re-render figures and print reports of a results directory")
    r.add_argument("directory")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return args.func(args)
    except (AssumptionViolated, ConfigError, InvalidMu, InvalidRegime, OutOfDomain, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PopulationCapExceeded, NumericFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except LpmBrwError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
