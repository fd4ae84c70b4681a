"""Run every shipped scenario and write its reports under one directory."""
import argparse
from pathlib import Path

from sparsedom.harness import PIPELINES, load_scenario, run_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    for name in PIPELINES:
        rep = run_scenario(load_scenario(name), out=args.out / name, seed=args.seed)
        failed = [c["name"] for c in rep["checks"] if not c["pass"]]
        print(f"{name:16s} {'PASS' if rep['pass'] else 'FAIL'} {' '.join(failed)}")


if __name__ == "__main__":
    main()
