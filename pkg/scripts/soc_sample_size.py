#!/usr/bin/env python3
"""Coverage of the empirical Bellman fixed point as the sample size varies.

Runs the finite-noise control model from configs/soc.json at a range of N
values below and above the prescribed size.

Usage: python scripts/soc_sample_size.py [--reps 300] [--seed 0]
"""

import argparse
import json
import sys
from pathlib import Path

from riskdp.risk import RiskSpec
from riskdp.saa import replication_rng
from riskdp.soc import SocModel, mc_soc_experiment, soc_empirical_value, soc_value_iteration

HERE = Path(__file__).resolve().parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, default=HERE / "configs" / "soc.json")
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", type=int, nargs="*", default=[5, 10, 20, 40, 80, 150, 300])
    args = p.parse_args()
    cfg = json.loads(args.config.read_text())
    model = SocModel.from_dict(cfg["model"])
    base = mc_soc_experiment(model, cfg["alpha"], cfg["eps"], cfg["delta"], reps=1, seed=args.seed)
    print(f"prescribed N = {base.n_used} (kappa_min = {base.extra['kappa_min']:.4f}, delta = {cfg['delta']})")
    print("N,coverage")
    for n in args.sizes:
        print(f"{n},{_with_n(model, cfg, n, args):.4f}")
    return 0


def _with_n(model, cfg, n, args):
    risk = RiskSpec("var", alpha=cfg["alpha"])
    tol = cfg["eps"] / 4
    V = soc_value_iteration(model, risk, tol).V
    probs = model.noise[0][0]
    hits = 0
    for r in range(args.reps):
        xi = replication_rng(args.seed, r).choice(len(probs), size=n, p=probs)
        res = soc_empirical_value(model, xi, risk, tol, V_exact=V)
        hits += res.deviation <= cfg["eps"]
    return hits / args.reps


if __name__ == "__main__":
    sys.exit(main())
