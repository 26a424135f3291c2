"""Command line entry points.

Subcommands:
  simulate   run the configured replica ensemble, write per-N CSVs + manifest
  diagnose   recompute all checks from a simulate output directory
  analytics  emit closed-form reference curves (no simulation)
  tables     emit the moment-map grids (lam, u_d) and (u, lambda_d)

Exit codes: 0 success, 2 validation error, 3 event budget exceeded,
4 missing input dependency.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .config import ConfigError, load_config
from .engine import EventBudgetExceeded
from .gibbs import ValidationError
from .lattice import ConfigurationError
from .reporting import MissingInputError, write_csv
from .runner import analytics_tables, diagnose_dir, resolve_threads, simulate_to_dir

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_MISSING_INPUT = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lekmc", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the configured ensemble")
    sim.add_argument("--config", required=True, help="experiment config file")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: LEKMC_THREADS or all cores)")

    diag = sub.add_parser("diagnose", help="run checks over simulate outputs")
    diag.add_argument("--config", required=True)
    diag.add_argument("--seed", type=int, default=None)
    diag.add_argument("--out", required=True,
                      help="run directory written by simulate; reports go to <out>/diagnostics")

    ana = sub.add_parser("analytics", help="emit closed-form reference curves")
    ana.add_argument("--family", choices=("gibbs", "zero_range"), required=True)
    ana.add_argument("--k", type=float, default=3.0)
    ana.add_argument("--grid", default="-3:3:121",
                     help="lo:hi:count evaluation grid (default -3:3:121)")
    ana.add_argument("--out", required=True)

    tab = sub.add_parser("tables", help="emit moment-map grids")
    tab.add_argument("--k", type=float, default=3.0)
    tab.add_argument("--grid", default="-3:3:601")
    tab.add_argument("--out", required=True)
    return p


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        raise ConfigError(f"bad grid spec {text!r}; expected lo:hi:count") from None


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed).validate()
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _load(args)
            results = simulate_to_dir(cfg, args.out, resolve_threads(args.threads))
            if any(r.budget_exceeded for r in results.values()):
                print("event budget exceeded; partial outputs flagged in manifest",
                      file=sys.stderr)
                return EXIT_BUDGET
            return EXIT_OK
        if args.command == "diagnose":
            cfg = _load(args)
            diagnose_dir(cfg, args.out, os.path.join(args.out, "diagnostics"))
            return EXIT_OK
        if args.command == "analytics":
            grid = _parse_grid(args.grid)
            os.makedirs(args.out, exist_ok=True)
            stamp = f"analytics-{args.family}-K{args.k:g}"
            for stem, (header, table) in analytics_tables(args.family, args.k, grid).items():
                write_csv(os.path.join(args.out, f"{stem}.csv"), header, table, stamp)
            return EXIT_OK
        if args.command == "tables":
            grid = _parse_grid(args.grid)
            os.makedirs(args.out, exist_ok=True)
            tables = analytics_tables("gibbs", args.k, grid)
            stamp = f"tables-K{args.k:g}"
            for stem in ("u_d", "lambda_d"):
                header, table = tables[stem]
                write_csv(os.path.join(args.out, f"{stem}.csv"), header, table, stamp)
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except EventBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ConfigError, ConfigurationError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
