"""Command-line entry point: ``run``, ``sweep`` and ``augment-only``.

Exit status is 0 on success, 2 for configuration/usage errors and 1 when a
pipeline stage fails.  Set ``NOISEPU_WORKERS`` to run trials in parallel.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .experiment import PipelineError, run_augment_only, run_experiment, run_sweep


def _overrides(args) -> dict:
    kv = {}
    if getattr(args, "out", None):
        kv["out"] = args.out
    if getattr(args, "trials", None) is not None:
        kv["trials"] = str(args.trials)
    if getattr(args, "seed", None) is not None:
        kv["seed"] = str(args.seed)
    return kv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisepu",
                                     description="Label-noise-robust training via PU augmentation and distillation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline for every trial")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)

    sweep = sub.add_parser("sweep", help="run one experiment per value of a parameter")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--out")
    sweep.add_argument("--trials", type=int)
    sweep.add_argument("--seed", type=int)

    aug = sub.add_parser("augment-only", help="emit only the augmented clean set")
    aug.add_argument("--config", required=True)
    aug.add_argument("--out")
    aug.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "run":
            out = run_experiment(cfg)
        elif args.command == "sweep":
            out = run_sweep(cfg, args.axis, [v for v in args.values.split(",") if v.strip()])
        else:
            out = run_augment_only(cfg)
    except (ConfigError, OSError) as exc:
        print(f"noisepu: usage error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"noisepu: stage {exc.stage} failed: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
