"""Command line entry point: ``lfidgp {run,reference,compare,validate-config}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError, LFIError


def _load(args):
    from .harness.config import load_config

    return load_config(args.config, base_seed=args.seed, workers=args.workers, output_dir=args.out)


def cmd_run(args):
    from .harness.runner import run_experiment

    config = _load(args)
    records = run_experiment(config, out_dir=config.output_dir, workers=config.workers)
    failed = sum(not r.ok for r in records)
    print(f"{len(records)} runs written to {config.output_dir} ({failed} failed)")
    return 0 if failed == 0 else 1


def cmd_reference(args):
    from .harness.runner import build_reference

    config = _load(args)
    ref = build_reference(config)
    print(f"reference for {config.simulator}: {ref.shape[0]} samples in {config.reference.cache_dir}")
    return 0


def cmd_compare(args):
    from .harness.compare import compare_models, write_comparison
    from .harness.records import read_records

    records = []
    for path in args.runs:
        if os.path.isdir(path):
            path = os.path.join(path, "runs.csv")
        records.extend(read_records(path))
    rows = compare_models(records, args.resamples, args.seed or 0)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_comparison(os.path.join(out, "comparison.csv"), rows)
    for r in rows:
        print(f"{r.simulator:4s} {r.surrogate:7s} median raw {r.raw_median:.4g}  scaled {r.scaled_median:.3f}  {r.interval}")
    return 0


def cmd_validate(args):
    config = _load(args)
    sys.stdout.write(config.effective_yaml())
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lfidgp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="YAML experiment file")
        sp.add_argument("--seed", type=int, help="override the base seed")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--out", help="output directory")

    common(sub.add_parser("run", help="run an experiment"))
    common(sub.add_parser("reference", help="build or load the cached reference posterior"))
    common(sub.add_parser("validate-config", help="check a config and print it with defaults"))
    cp = sub.add_parser("compare", help="comparison table from one or more runs.csv files")
    cp.add_argument("runs", nargs="+", help="runs.csv files or result directories")
    cp.add_argument("--resamples", type=int, default=10_000)
    common(cp, config_required=False)
    return p


COMMANDS = {"run": cmd_run, "reference": cmd_reference, "compare": cmd_compare,
            "validate-config": cmd_validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LFIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
