"""
Command line entry point.

    adagrad-control run --config cfg.json [--seed N] [--iters N] [--out DIR]
    adagrad-control verify --config cfg.json --suite gradient [--out DIR]
    adagrad-control kl-report --config cfg.json

The default output directory is taken from ``$ADAGRAD_CONTROL_OUT`` when the
configuration does not name one. Exit codes: 0 success, 1 configuration
error, 2 numerical failure, 3 failed verification.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import OUTPUT_ENV, load_config
from .errors import CoercivityError, ConfigurationError, ShapeError, SolverError
from .experiments import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VERIFY, _jsonable, build_problem, run_experiment
from .verify import SUITES, run_suite


def _parser():
    p = argparse.ArgumentParser(prog="adagrad-control", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an optimization experiment and write CSV artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--iters", type=int)
    r.add_argument("--out", help=f"output directory (default: config, then ${OUTPUT_ENV}, then ./out)")
    v = sub.add_parser("verify", help="run a numerical verification suite")
    v.add_argument("--config", required=True)
    v.add_argument("--suite", required=True, choices=sorted(SUITES))
    v.add_argument("--out")
    k = sub.add_parser("kl-report", help="print the Karhunen-Loeve spectrum")
    k.add_argument("--config", required=True)
    return p


def _run(args):
    config = load_config(args.config)
    if args.seed is not None and args.seed < 0:
        raise ConfigurationError("--seed must be nonnegative")
    if args.iters is not None and args.iters < 0:
        raise ConfigurationError("--iters must be nonnegative")
    result = run_experiment(config, out=args.out, seed=args.seed, iters=args.iters)
    for f in result.files:
        print(f)
    if result.status != EXIT_OK:
        print(f"numerical failure: {result.message}", file=sys.stderr)
    return result.status


def _verify(args):
    config = load_config(args.config)
    report = run_suite(config, args.suite)
    out = config.output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"verify_{args.suite}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {c['name']}: {c['value']:.6g} {c['comparison']} {c['tolerance']}")
    print(path)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def _kl_report(args):
    config = load_config(args.config)
    if config.problem == "example2":
        raise ConfigurationError("kl-report needs a lognormal-diffusion problem")
    basis = build_problem(config).basis
    lam = basis.eigenvalues
    cum = np.cumsum(lam) / (basis.sigma2 * basis.weights.sum())
    print(f"modes {basis.modes}  sigma2 {basis.sigma2}  corr_length {basis.corr_length}")
    print(f"{'k':>4} {'eigenvalue':>14} {'captured':>10}")
    for k, (l, c) in enumerate(zip(lam, cum), 1):
        print(f"{k:>4} {l:>14.6e} {c:>10.6f}")
    print(f"captured variance fraction {basis.captured_fraction:.10f}")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    handler = {"run": _run, "verify": _verify, "kl-report": _kl_report}[args.command]
    try:
        return handler(args)
    except (ConfigurationError, CoercivityError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
