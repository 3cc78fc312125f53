#!/usr/bin/env python3
"""Run every experiment config through the CLI and collect the reports.

Usage: python scripts/run_experiments.py [--out results] [--seed N] [--reps N]
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--configs", type=Path, default=HERE / "configs")
    p.add_argument("--out", type=Path, default=HERE.parent / "results")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for cfg in sorted(args.configs.glob("*.json")):
        cmd = [sys.executable, "-m", "riskdp", "experiment", str(cfg),
               "--manifest", str(args.out / f"{cfg.stem}.manifest.json")]
        if json.loads(cfg.read_text())["type"] in ("exact", "growth", "uniform", "soc"):
            cmd += ["--csv", str(args.out / f"{cfg.stem}.csv")]
        if args.seed is not None:
            cmd += ["--seed", str(args.seed)]
        if args.reps is not None:
            cmd += ["--reps", str(args.reps)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{cfg.name}: exit {proc.returncode}: {proc.stderr.strip()}", file=sys.stderr)
            summary[cfg.stem] = {"exit_code": proc.returncode}
            continue
        (args.out / f"{cfg.stem}.json").write_text(proc.stdout)
        report = json.loads(proc.stdout)
        summary[cfg.stem] = report
        keys = [k for k in ("n_used", "coverage", "max_deviation", "value", "dynamic", "gap", "randomized") if k in report]
        print(f"{cfg.stem:8s} " + "  ".join(f"{k}={report[k]}" for k in keys))
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
