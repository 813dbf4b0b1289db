"""Command-line entry point.

``robust-gnep solve CONFIG [--sweep topologies=a,b] [--mode ripfbf|tseng|both]
[--centralized] [--out DIR]``

Exit codes: 0 converged and verified, 2 converged but verification failed,
3 not converged, 4 invalid configuration or a game failing validation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ExperimentConfig, load_config, shipped_config_path
from .errors import ConfigError, ConfigurationError, GameValidationError, GraphError, InfeasibleError
from .export import export_results
from .experiment import run_experiment

OUT_ENV = "ROBUST_GNEP_OUT"
EXIT_OK, EXIT_VERIFY, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 2, 3, 4


def _parse_sweep(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key != "topologies" or not value:
            raise ConfigError("/experiment", f"bad --sweep argument {item!r}; expected topologies=a,b,...")
        out["topologies"] = [v.strip() for v in value.split(",") if v.strip()]
    return out


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    sections = {}
    if args.sweep:
        sections["experiment"] = _parse_sweep(args.sweep)
    if args.centralized:
        sections.setdefault("experiment", {})["centralized"] = True
    if args.mode:
        sections["solver"] = {"mode": args.mode}
    return cfg.replace(**sections) if sections else cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-gnep", description="Distributed robust GNE seeking.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run an experiment config")
    s.add_argument("config", help="path to a JSON config")
    s.add_argument("--sweep", action="append", default=[], metavar="topologies=a,b",
                   help="run the game over several named topologies")
    s.add_argument("--mode", choices=["ripfbf", "tseng", "both"], help="override solver.mode")
    s.add_argument("--centralized", action="store_true", help="also run the centralized reference solver")
    s.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or output.dir of the config)")
    e = sub.add_parser("example", help="print a shipped config")
    e.add_argument("name", nargs="?", default="benchmark")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "example":
        path = shipped_config_path(args.name)
        if not path.exists():
            print(f"no shipped config named {args.name!r}", file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(path.read_text())
        return EXIT_OK
    try:
        cfg = apply_overrides(load_config(args.config), args)
        report = run_experiment(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ConfigurationError, GameValidationError, GraphError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.environ.get(OUT_ENV) or cfg.data["output"]["dir"]
    paths = export_results(report, out)
    for run in report.runs:
        status = "verified" if run.verified else ("converged" if run.report.converged else "not converged")
        print(f"{run.topology:<9} {run.mode:<7} iterations={run.report.iterations:<6} "
              f"residual={run.report.final_residual:.3e} {status}")
    for err in report.errors:
        print(f"error: {err}", file=sys.stderr)
    print(f"results written to {paths['residuals.csv'].parent}")
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
