"""Command line entry point ``entropic-interp``.

Commands
--------
validate     check a configuration without running anything
run          run the ε-sweep and write report.json, sweep.csv, path_<eps>.csv
space-check  build the space and report its structural invariants

Exit status: 0 success, 1 a check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config, resolve, validate_config
from .errors import ConfigError, EntropicError
from .experiment import build_space, run_experiment
from .serialize import atomic_write_text
from .space import validate_space

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="entropic-interp", description="Entropic interpolation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("validate", "check a configuration file"),
        ("run", "run the experiment described by a configuration file"),
        ("space-check", "validate the space described by a configuration file"),
    ):
        c = sub.add_parser(name, help=text)
        c.add_argument("--config", required=True, help="TOML configuration file")
        c.add_argument("--out", help="output directory (overrides output.dir)")
        c.add_argument("--threads", type=int, default=1, help="parallel sweep members (default 1)")
        c.add_argument("--seed", type=int, default=0, help="seed for randomized marginals (default 0)")
    return p


def _err(msg):
    print(msg, file=sys.stderr)


def _load(path):
    text, table = load_config(path)
    return text, table, Path(path).resolve().parent


def cmd_validate(args):
    _, table, _ = _load(args.config)
    problems = validate_config(table)
    for line in problems:
        print(line)
    if problems:
        return EXIT_CONFIG
    print("configuration OK")
    return EXIT_OK


def cmd_space_check(args):
    _, table, base = _load(args.config)
    cfg = resolve(table)
    report = validate_space(build_space(cfg, base))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: residual {c.residual:.3e} (tol {c.tolerance:.1e}) {c.note}".rstrip())
    if args.out:
        atomic_write_text(Path(args.out) / "space_report.json", json.dumps(report.as_dict(), indent=2) + "\n")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_run(args):
    text, table, base = _load(args.config)
    res, out = run_experiment(text, table, out_dir=args.out, threads=args.threads, seed=args.seed, base_dir=base)
    for c in res.checks:
        print(f"{c.status.upper():7s} {c.name}: {c.detail}")
    print(f"wrote {out}")
    return EXIT_OK if res.passed else EXIT_CHECK


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads < 1:
        _err("--threads must be at least 1")
        return EXIT_CONFIG
    if args.seed < 0 or args.seed >= 2**64:
        _err("--seed must be an unsigned 64-bit integer")
        return EXIT_CONFIG
    handler = {"validate": cmd_validate, "run": cmd_run, "space-check": cmd_space_check}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except EntropicError as exc:
        _err(f"{exc.code}: {exc}")
        return EXIT_CHECK
    except OSError as exc:
        _err(f"i/o error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
