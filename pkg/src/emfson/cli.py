"""Command line entry point.

Errors are reported as one JSON object on stderr with a category and a
message, and a category-specific nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, dump_config, load_config, preset
from .errors import (ContractViolation, DomainError, LayoutError, NoMeasurement,
                     SimulationFault, UndefinedGain)

EXIT_CODES = {
    "config": 2,
    "domain": 3,
    "layout": 4,
    "measurement": 5,
    "simulation": 6,
    "contract": 7,
    "io": 8,
}

_CATEGORIES = [
    (ConfigError, "config"),
    (LayoutError, "layout"),
    (NoMeasurement, "measurement"),
    (UndefinedGain, "measurement"),
    (SimulationFault, "simulation"),
    (ContractViolation, "contract"),
    (DomainError, "domain"),
    (OSError, "io"),
]


def _seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors surface as config errors."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML scenario file")
    common.add_argument("--preset", choices=["table1", "desk"], default=None,
                        help="built-in scenario (default: table1 unless --config is given)")
    common.add_argument("--seeds", type=_seeds, help="comma separated run seeds, e.g. 1,2,3")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--horizon", type=float, help="simulated seconds per run")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="emfson", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="uniform CIO sweep over all seeds")
    sub.add_parser("son", parents=[common], help="SON runs against the baseline CIO")
    single = sub.add_parser("single", parents=[common], help="one CIO, all seeds")
    single.add_argument("--cio", type=float, help="small-cell CIO in dB (default: baseline)")
    sub.add_parser("validate-config", parents=[common],
                   help="check a scenario and print it normalized")
    report = sub.add_parser("report", parents=[common],
                            help="print the summary and verify the manifest of a results dir")
    report.add_argument("results", type=Path, nargs="?", help="results directory")
    return p


def _scenario(args, mode=None):
    if args.config is not None and args.preset is not None:
        raise ConfigError("use either --config or --preset, not both")
    cfg = load_config(args.config) if args.config is not None else preset(args.preset or "table1")
    return harness.with_overrides(cfg, seeds=args.seeds, horizon_s=args.horizon,
                                  out_dir=args.out, mode=mode)


def _campaign(args, mode):
    cfg = _scenario(args, mode)
    if mode == "single" and getattr(args, "cio", None) is not None:
        cfg.experiment.baseline_cio_db = args.cio
        cfg.validate()
    result = harness.run_campaign(cfg)
    manifest = harness.emit_reports(result, cfg.experiment.out_dir)
    sys.stdout.write(harness.summary_text(result))
    sys.stdout.write(f"manifest digest: {manifest['digest']}\n")
    return 0


def _validate(args):
    cfg = _scenario(args)
    sys.stdout.write(dump_config(cfg))
    return 0


def _report(args):
    root = args.results or args.out
    if root is None:
        raise ConfigError("report needs a results directory")
    manifest, bad = harness.verify_manifest(root)
    sys.stdout.write((root / "summary.txt").read_text(encoding="utf-8"))
    if bad:
        raise SimulationFault(f"manifest mismatch for {len(bad)} file(s): {', '.join(bad[:5])}")
    sys.stdout.write(f"manifest ok: {len(manifest['files'])} files, digest {manifest['digest']}\n")
    return 0


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command in ("sweep", "son", "single"):
            return _campaign(args, args.command)
        if args.command == "validate-config":
            return _validate(args)
        return _report(args)
    except Exception as exc:  # noqa: BLE001 - mapped to a category below
        for cls, category in _CATEGORIES:
            if isinstance(exc, cls):
                json.dump({"error": category, "type": type(exc).__name__, "message": str(exc)},
                          sys.stderr)
                sys.stderr.write("\n")
                return EXIT_CODES[category]
        raise


if __name__ == "__main__":
    sys.exit(main())
