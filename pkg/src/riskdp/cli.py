"""Command-line front end.

Results go to stdout as sorted-key JSON (or CSV rows). The run manifest goes
to stderr, or to ``--manifest PATH``, so stdout is byte-identical across
reruns. Exit codes: 0 ok, 2 unreadable input, 3 domain error, 4 no
convergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import MaxIterExceededError, RiskDPError
from .mdp import MdpModel, solve_mdp_game, mdp_value_iteration, static_robust_bruteforce
from .measures import FiniteDistribution
from .nested import ScenarioTree, nested_values
from .risk import RiskSpec, evaluate, parse_profile, robust_evaluate
from .saa import (
    mc_exact_experiment,
    mc_growth_experiment,
    mc_uniform_experiment,
    sampler_from_dict,
)
from .saddle import analyze
from .soc import SocModel, mc_soc_experiment, soc_value_iteration, solve_soc_game

EXIT_OK, EXIT_PARSE, EXIT_DOMAIN, EXIT_MAXITER = 0, 2, 3, 4
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10**6


class InputError(Exception):
    """Input could not be read or decoded."""


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, allow_nan=False)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _resolve_seed(cli_seed, config_seed=None) -> int:
    env = os.environ.get("RISKDP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"RISKDP_SEED={env!r} is not an integer") from None
    if cli_seed is not None:
        return int(cli_seed)
    return int(config_seed or 0)


def _risk_from_args(args) -> RiskSpec:
    if args.risk:
        return RiskSpec.parse(args.risk)
    kind = args.kind.lower()
    if kind in ("var", "avar"):
        return RiskSpec(kind, alpha=args.alpha)
    if kind == "entropic":
        return RiskSpec(kind, tau=args.tau)
    return RiskSpec(kind)


def _load_model(d: dict):
    if "phi" in d:
        return SocModel.from_dict(d)
    if "kernels" in d:
        return MdpModel.from_dict(d)
    raise KeyError("model needs 'phi' (control model) or 'kernels' (MDP)")


# ---------------------------------------------------------------------------
# subcommands: each returns (result, extra manifest fields)


def cmd_risk_eval(data: dict, args, ctx: dict):
    risk = _risk_from_args(args)
    if "candidates" in data:
        dists = [FiniteDistribution.from_dict(c) for c in data["candidates"]]
        value, member = robust_evaluate(risk, dists)
        return {"value": value, "member": member, "risk": str(risk)}
    return {"value": evaluate(risk, FiniteDistribution.from_dict(data)), "risk": str(risk)}


def cmd_nested_eval(data: dict, args, ctx: dict):
    tree = ScenarioTree.from_dict(data)
    profile = parse_profile(args.risk_profile, tree.stages)
    ctx["risk_profile"] = [str(r) for r in profile]
    return nested_values(tree, profile, robust=not args.no_robust).to_dict()


def cmd_solve(data: dict, args, ctx: dict):
    model = _load_model(data)
    ctx.update(tol=args.tol, max_iter=args.max_iter)
    if model.discount is not None:
        risk = parse_profile(args.risk_profile, 1)[0]
        ctx["risk_profile"] = [str(risk)]
        solver = soc_value_iteration if isinstance(model, SocModel) else mdp_value_iteration
        res = solver(model, risk, args.tol, args.max_iter)
        out = res.to_dict()
        out["converged"] = True
        return out
    profile = parse_profile(args.risk_profile, model.n_stages)
    ctx["risk_profile"] = [str(r) for r in profile]
    solver = solve_soc_game if isinstance(model, SocModel) else solve_mdp_game
    V, policy, nature = solver(model, profile)
    return {"V": V, "policy": policy, "nature": nature}


def cmd_saddle(data, args, ctx: dict):
    if isinstance(data, dict):
        psi = data["psi"]
        risk = RiskSpec.parse(data["risk"]) if data.get("risk") else None
    else:
        psi, risk = data, None
    ctx["tol"] = args.tol
    return analyze(psi, args.tol, risk).to_dict()


def cmd_experiment(data: dict, args, ctx: dict):
    kind = data["type"]
    seed = _resolve_seed(args.seed, data.get("seed"))
    reps = int(args.reps if args.reps is not None else data.get("reps", 1000))
    ctx.update(seed=seed, reps=reps, experiment=kind)
    if kind == "exact":
        rep = mc_exact_experiment(
            FiniteDistribution.from_dict(data["dist"]), data["alpha"], data["delta"], reps, seed, data.get("n")
        )
    elif kind == "growth":
        rep = mc_growth_experiment(
            sampler_from_dict(data["sampler"]), data["alpha"], data["eps"], data["delta"], reps, seed,
            data.get("c"), data.get("b"), data.get("n"),
        )
    elif kind == "uniform":
        rep = mc_uniform_experiment(
            data.get("family", "shift"), data["grid"], sampler_from_dict(data["sampler"]),
            data["alpha"], data["eps"], data["delta"], data["L"], reps, seed,
            data.get("c"), data.get("b"), data.get("true_var"), data.get("n"),
        )
    elif kind == "soc":
        rep = mc_soc_experiment(
            SocModel.from_dict(data["model"]), data["alpha"], data["eps"], data["delta"], reps, seed,
            data.get("tol"), int(data.get("max_iter", DEFAULT_MAX_ITER)),
        )
    elif kind == "static":
        res = static_robust_bruteforce(MdpModel.from_dict(data["model"]), data.get("risk_profile", "expectation"))
        return res.to_dict()
    elif kind == "saddle":
        risk = RiskSpec.parse(data["risk"]) if data.get("risk") else None
        return analyze(data["psi"], float(data.get("tol", 1e-9)), risk).to_dict()
    else:
        raise KeyError(f"unknown experiment type {kind!r}")
    if args.csv:
        _write_csv(rep.rows, args.csv)
        ctx["outputs"].append(args.csv)
    if args.out == "csv":
        return _csv_text(rep.rows)
    return rep.to_dict()


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(_plain(rows))
    return buf.getvalue()


def _write_csv(rows: list, path: str):
    with open(path, "w", newline="") as fh:
        fh.write(_csv_text(rows))


COMMANDS = {
    "risk-eval": cmd_risk_eval,
    "nested-eval": cmd_nested_eval,
    "solve": cmd_solve,
    "saddle": cmd_saddle,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskdp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"riskdp {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="JSON input ('-' reads standard input)")
    common.add_argument("--seed", type=int, default=None, help="overridden by RISKDP_SEED")
    common.add_argument("--threads", type=int, default=None, help="worker cap; execution is serial")
    common.add_argument("--manifest", default=None, help="write the run manifest here instead of stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("risk-eval", parents=[common], help="evaluate a risk functional on a distribution")
    r.add_argument("--kind", default="expectation", choices=["expectation", "var", "avar", "entropic"])
    r.add_argument("--alpha", type=float, default=None)
    r.add_argument("--tau", type=float, default=None)
    r.add_argument("--risk", default=None, help="compact form such as avar:0.1")

    n = sub.add_parser("nested-eval", parents=[common], help="nested risk of a scenario tree")
    n.add_argument("--risk-profile", default="expectation")
    n.add_argument("--no-robust", action="store_true", help="reject nodes with several candidate laws")

    s = sub.add_parser("solve", parents=[common], help="dynamic programming or value iteration")
    s.add_argument("--risk-profile", default="expectation")
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)

    g = sub.add_parser("saddle", parents=[common], help="pure and mixed values of a payoff matrix")
    g.add_argument("--tol", type=float, default=1e-9)

    e = sub.add_parser("experiment", parents=[common], help="Monte Carlo coverage and enumeration experiments")
    e.add_argument("--reps", type=int, default=None)
    e.add_argument("--out", choices=["json", "csv"], default="json")
    e.add_argument("--csv", default=None, help="also write per-replication rows to this path")
    return p


def _read_input(path: str) -> tuple[bytes, object]:
    try:
        raw = sys.stdin.buffer.read() if path == "-" else open(path, "rb").read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return raw, json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None


def _emit_error(code: str, detail: str, **extra):
    sys.stderr.write(dumps({"error": code, "detail": detail, **extra}) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ctx: dict = {"outputs": [], "tol": None}
    manifest = None
    status = EXIT_OK
    try:
        raw, data = _read_input(args.file)
        manifest = {
            "command": args.command,
            "input": args.file,
            "input_sha256": hashlib.sha256(raw).hexdigest(),
            "seed": _resolve_seed(args.seed),
            "threads": args.threads or os.cpu_count(),
            "timestamp": _timestamp(),
            "version": __version__,
        }
        result = COMMANDS[args.command](data, args, ctx)
        text = result if isinstance(result, str) else dumps(result) + "\n"
        sys.stdout.write(text)
        ctx["outputs"].append("stdout")
    except InputError as exc:
        _emit_error("ParseError", str(exc))
        status = EXIT_PARSE
    except MaxIterExceededError as exc:
        sys.stdout.write(dumps({"converged": False, "residuals": exc.residuals}) + "\n")
        _emit_error(exc.code, exc.detail)
        status = EXIT_MAXITER
    except RiskDPError as exc:
        _emit_error(exc.code, exc.detail, **exc.payload)
        status = EXIT_DOMAIN
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as exc:
        _emit_error("ParseError", f"{type(exc).__name__}: {exc}")
        status = EXIT_PARSE
    if manifest is not None:
        manifest.update({k: v for k, v in ctx.items() if k != "outputs"})
        manifest["outputs"] = ctx["outputs"]
        manifest["exit_code"] = status
        text = dumps({"manifest": manifest}) + "\n"
        if args.manifest:
            with open(args.manifest, "w") as fh:
                fh.write(text)
        else:
            sys.stderr.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
