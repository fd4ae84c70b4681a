"""Command line entry point: ``sparsedom <scenario> [--out DIR] [--seed N] ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import PIPELINES, ConfigError, load_scenario, run_scenario


def build_parser():
    ap = argparse.ArgumentParser(prog="sparsedom", description="Sparse domination experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="directory for report files")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--force", action="store_true", help="override brute-force cost guards")
    common.add_argument("--mode", choices=["dilated", "upgraded"], default=None)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run a scenario from a JSON config")
    run.add_argument("config", type=Path)
    for name in PIPELINES:
        sub.add_parser(name, parents=[common], help=f"run the shipped {name} scenario")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = json.loads(args.config.read_text())
        else:
            cfg = load_scenario(args.command)
        report = run_scenario(cfg, out=args.out, seed=args.seed, mode=args.mode,
                              force=args.force or None)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['name']}: {c['value']} ({c['kind']} {c['bound']})")
    print(f"{report['scenario']['name']}: {'PASS' if report['pass'] else 'FAIL'}")
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
