"""``motorsim`` command line.

Exit codes: 0 success, 1 runtime failure (including failed validation
checks), 2 config or parameter validation failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, runs, validation
from .config import DEFAULT_CONFIG, load_config, parse_config
from .errors import MotorSimError, ValidationError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
DEFAULT_OUT = "motorsim-out"

COMMANDS = {
    "simulate": ("sim", runs.run_simulate),
    "meanfield": ("ode", runs.run_meanfield),
    "pde": ("pde", runs.run_pde),
    "nonlinear": ("nl", runs.run_nonlinear),
    "sweep": ("sweep", runs.run_sweep),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="motorsim",
        description="Stochastic, mean-field and transport models of a filament driven by elastic motors.",
    )
    parser.add_argument("--version", action="version", version=f"motorsim {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (default: config output_dir, "
                        f"then $MOTORSIM_OUT, then ./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replicas and sweep points")
    common.add_argument("--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "simulate": "Monte Carlo simulation of the motor ensemble",
        "meanfield": "moment ODE for bound fraction and velocity, with regime report",
        "pde": "transport equation for the bound-motor density",
        "nonlinear": "sine/sinh returning force: closure ODE, stationary points, cycle search",
        "sweep": "run one mode over a parameter grid",
        "validate": "cross-layer consistency checks",
    }
    for name, text in help_text.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "validate":
            p.add_argument("--flip-force-sign", action="store_true",
                           help="debug: run the stochastic layer with -F (checks should fail)")
    return parser


def output_dir(args, cfg_dir):
    if args.out is not None:
        return Path(args.out)
    if cfg_dir:
        return Path(cfg_dir)
    return Path(os.environ.get("MOTORSIM_OUT") or DEFAULT_OUT)


def _emit(args, text):
    if not args.quiet:
        print(text)


def _run_mode(args):
    mode, runner = COMMANDS[args.command]
    if args.config is None:
        raise ValidationError("--config is required for this command", key="--config")
    cfg = load_config(args.config, mode=mode, seed_override=args.seed)
    out = output_dir(args, cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = runner(cfg, out, jobs=args.jobs)
    if args.command == "sweep":
        summary, _rows = result
        _emit(args, f"sweep: {summary['succeeded']}/{summary['points']} points succeeded -> {out}")
        return EXIT_OK if summary["succeeded"] >= 1 else EXIT_RUNTIME
    _emit(args, json.dumps({k: v for k, v in result.items() if k != "replicas"}, default=str, indent=2))
    _emit(args, f"wrote {out}")
    return EXIT_OK


def _run_validate(args):
    if args.config is not None:
        cfg = load_config(args.config, seed_override=args.seed)
    else:
        data = dict(DEFAULT_CONFIG)
        if args.seed is not None:
            data["seed"] = args.seed
        cfg = parse_config(data)
    ctx = validation.Context(params=cfg.params, seed=cfg.seed, jobs=args.jobs,
                             flip_F=args.flip_force_sign)
    results = validation.run_all(ctx, report=lambda r: _emit(args, r.line()))
    failed = [r for r in results if not r.passed]
    for r in failed if args.quiet else ():
        print(r.line(), file=sys.stderr)
    _emit(args, f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_RUNTIME if failed else EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "validate":
            return _run_validate(args)
        return _run_mode(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG if args.config is not None and not args.config.exists() else EXIT_RUNTIME
    except MotorSimError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
