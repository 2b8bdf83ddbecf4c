"""Command-line entry point.

Subcommands: ``run`` executes an experiment config, ``validate`` checks one,
``summarize`` rebuilds summaries from raw traces, ``simulate`` writes a
synthetic data CSV.  Exit codes: 0 success, 1 validation error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from ..models import Ar1Params, PolioParams, ar1_model, polio_model, simulate
from .config import ConfigError, load_config
from .runner import run_experiment, summarize_directory


def _build_parser():
    p = argparse.ArgumentParser(prog="pfscore")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--out", default=None, help="override output_dir")
    run.add_argument("--seed-root", type=int, default=None)

    val = sub.add_parser("validate", help="validate a config and exit")
    val.add_argument("config")

    summ = sub.add_parser("summarize", help="recompute summaries from raw traces")
    summ.add_argument("outdir")

    sim = sub.add_parser("simulate", help="simulate a series to CSV")
    sim.add_argument("model", choices=["ar1", "polio"])
    sim.add_argument("theta", help="comma-separated parameter values")
    sim.add_argument("T", type=int)
    sim.add_argument("seed", type=int)
    sim.add_argument("out")
    return p


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.out is not None or args.seed_root is not None:
        config = dataclasses.replace(
            config,
            output_dir=args.out if args.out is not None else config.output_dir,
            seed_root=args.seed_root if args.seed_root is not None else config.seed_root,
        )
    run_experiment(config, workers=args.workers)
    print(f"wrote {config.output_dir}")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print("config ok")
    return 0


def _cmd_summarize(args) -> int:
    summary = summarize_directory(args.outdir)
    print(f"summarized {len(summary.headers)} grid point(s)")
    return 0


def _cmd_simulate(args) -> int:
    theta = np.array([float(v) for v in args.theta.split(",")])
    if args.model == "ar1":
        model = ar1_model(Ar1Params(*theta))
        header = "t,y"
    else:
        model = polio_model(PolioParams(tuple(theta[:6]), theta[6], theta[7]))
        header = "t,count"
    rng = np.random.default_rng(args.seed)
    _, y = simulate(model, theta, args.T, rng)
    with open(args.out, "w") as f:
        f.write(header + "\n")
        for t, v in enumerate(y, 1):
            f.write(f"{t},{int(v) if args.model == 'polio' else repr(float(v))}\n")
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "validate": _cmd_validate,
        "summarize": _cmd_summarize,
        "simulate": _cmd_simulate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures map to exit code 2
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
