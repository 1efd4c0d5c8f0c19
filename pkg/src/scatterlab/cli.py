"""Command line entry point: ``scatterlab <subcommand> --config <file>``.

Exit codes: 0 all checks pass, 1 configuration error, 2 a check failed,
3 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .errors import ConfigError
from .grid import set_fft_workers
from .harness import PHASES, run
from .presets import PRESETS
from .report import format_rows, load_report, rows_from_json, summary

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scatterlab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(PHASES))
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment config file (dotted key = value lines)")
    src.add_argument("--preset", choices=sorted(PRESETS), help="run a named preset without a config file")
    p.add_argument("--out", help="output directory (default: $SCATTERLAB_OUT/<name> or ./runs/<name>)")
    p.add_argument("--seed", type=int, help="override ensemble.seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="FFT worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _output_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    root = os.environ.get("SCATTERLAB_OUT", "runs")
    return Path(root) / cfg.name


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg = cfgmod.load(args.config)
        else:
            cfg = cfgmod.from_dict({"preset": args.preset})
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError([f"--seed must be an unsigned 64-bit integer, got {args.seed}"])
            cfg = dataclasses.replace(cfg, seed=args.seed)
        errs = cfgmod.validate(cfg)
        if errs:
            raise ConfigError(errs)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads:
        set_fft_workers(args.threads)
    out = _output_dir(args, cfg)

    if args.subcommand == "report" and (out / "report.json").exists():
        stored = load_report(out / "report.json")
        rows = rows_from_json(stored)
        print(format_rows(rows))
        failed = [r for r in rows if r.passed is False]
        print(f"{sum(r.passed is not None for r in rows) - len(failed)}/{sum(r.passed is not None for r in rows)} "
              f"checks passed ({out / 'report.json'})")
        return EXIT_FAIL if failed else EXIT_OK

    phase = "verify" if args.subcommand == "report" else args.subcommand
    try:
        report, _ = run(cfg, phase, out_dir=out)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure inside a phase is a runtime error
        print(f"runtime error during {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_RUNTIME
    print(format_rows(report.rows))
    print(summary(report) + f"  -> {out}")
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
