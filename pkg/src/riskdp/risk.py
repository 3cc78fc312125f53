"""Risk functionals on finite laws and their robust counterparts.

Two layers live here. The ``*_values`` kernels act on raw arrays of outcomes
and probabilities along the last axis (unsorted, duplicates allowed) and are
what the dynamic-programming solvers call in their inner loops. The
scalar functions (:func:`var`, :func:`avar`, ...) take a
:class:`~riskdp.measures.FiniteDistribution` and route through the same
kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AlphaOutOfRangeError,
    EmptyAmbiguitySetError,
    InvalidRiskSpecError,
    TauOutOfRangeError,
)
from .measures import FiniteDistribution

# Cumulative float sums can undershoot exact rationals by a few ulps; the
# left quantile must not skip an atom because of that.
CDF_TOL = 1e-12

KINDS = ("expectation", "var", "avar", "entropic")


@dataclass(frozen=True)
class RiskSpec:
    kind: str
    alpha: float | None = None
    tau: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise InvalidRiskSpecError(f"unknown risk kind {self.kind!r}; expected one of {KINDS}")
        if kind in ("var", "avar"):
            if self.alpha is None or self.tau is not None:
                raise InvalidRiskSpecError(f"{kind} takes alpha and no tau")
            alpha = float(self.alpha)
            hi_ok = alpha < 1 if kind == "var" else alpha <= 1
            if not (alpha > 0 and hi_ok):
                raise AlphaOutOfRangeError(f"alpha={alpha!r} outside the range allowed for {kind}")
            object.__setattr__(self, "alpha", alpha)
        elif kind == "entropic":
            if self.tau is None or self.alpha is not None:
                raise InvalidRiskSpecError("entropic takes tau and no alpha")
            tau = float(self.tau)
            if not (tau > 0 and np.isfinite(tau)):
                raise TauOutOfRangeError(f"tau={tau!r} must be positive")
            object.__setattr__(self, "tau", tau)
        elif self.alpha is not None or self.tau is not None:
            raise InvalidRiskSpecError("expectation takes no parameters")

    def __str__(self) -> str:
        if self.kind in ("var", "avar"):
            return f"{self.kind}:{self.alpha!r}"
        if self.kind == "entropic":
            return f"entropic:{self.tau!r}"
        return "expectation"

    @property
    def coherent(self) -> bool:
        return self.kind in ("expectation", "avar")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.tau is not None:
            d["tau"] = self.tau
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RiskSpec":
        kind = str(d["kind"]).lower()
        if kind in ("var", "avar"):
            return cls(kind, alpha=d.get("alpha"))
        if kind == "entropic":
            return cls(kind, tau=d.get("tau"))
        return cls(kind)

    @classmethod
    def parse(cls, text: str) -> "RiskSpec":
        """Parse ``"var:0.3"``, ``"avar:0.1"``, ``"entropic:1"`` or ``"expectation"``."""
        name, _, param = text.strip().partition(":")
        name = name.lower()
        if name in ("var", "avar"):
            return cls(name, alpha=_parse_float(param, text))
        if name == "entropic":
            return cls(name, tau=_parse_float(param, text))
        if param:
            raise InvalidRiskSpecError(f"{name!r} takes no parameter in {text!r}")
        return cls(name)


def _parse_float(param: str, text: str) -> float:
    try:
        return float(param)
    except ValueError:
        raise InvalidRiskSpecError(f"missing or malformed parameter in {text!r}") from None


EXPECTATION = RiskSpec("expectation")


@dataclass(frozen=True)
class RobustRiskSpec:
    inner: RiskSpec
    member_count: int = 1

    def __post_init__(self):
        if int(self.member_count) < 1:
            raise EmptyAmbiguitySetError("member_count must be at least 1")


def parse_profile(text: str | Sequence, stages: int | None = None) -> list[RiskSpec]:
    """Stage risk profile from ``"avar:0.1"`` (broadcast) or ``"var:0.3,expectation"``.

    Also accepts a single :class:`RiskSpec` or a list of specs, strings or
    JSON dicts.
    """
    if isinstance(text, RiskSpec):
        text = [text]
    if isinstance(text, str):
        items = [RiskSpec.parse(part) for part in text.split(",") if part.strip()]
    else:
        items = [
            r if isinstance(r, RiskSpec) else RiskSpec.parse(r) if isinstance(r, str) else RiskSpec.from_dict(r)
            for r in text
        ]
    if not items:
        raise InvalidRiskSpecError("empty risk profile")
    if stages is not None:
        if len(items) == 1:
            items = items * stages
        elif len(items) != stages:
            raise InvalidRiskSpecError(f"profile has {len(items)} entries for {stages} stages")
    return items


# ---------------------------------------------------------------------------
# array kernels: outcomes along the last axis


def _sorted(values, probs):
    values, probs = np.broadcast_arrays(np.asarray(values, float), np.asarray(probs, float))
    order = np.argsort(values, axis=-1, kind="stable")
    return np.take_along_axis(values, order, -1), np.take_along_axis(probs, order, -1)


def expectation_values(values, probs) -> np.ndarray:
    values, probs = np.broadcast_arrays(np.asarray(values, float), np.asarray(probs, float))
    return np.sum(values * probs, axis=-1)


def var_values(values, probs, alpha: float) -> np.ndarray:
    """Left (1-alpha)-quantile along the last axis."""
    z, p = _sorted(values, probs)
    hit = np.cumsum(p, axis=-1) >= 1.0 - alpha - CDF_TOL
    hit[..., -1] = True
    idx = np.argmax(hit, axis=-1)
    return np.take_along_axis(z, idx[..., None], -1)[..., 0]


def avar_values(values, probs, alpha: float) -> np.ndarray:
    # the infimum over tau is attained at the (1-alpha)-quantile
    if alpha == 1.0:
        return expectation_values(values, probs)
    values, probs = np.broadcast_arrays(np.asarray(values, float), np.asarray(probs, float))
    tau = var_values(values, probs, alpha)
    excess = np.maximum(values - tau[..., None], 0.0)
    return tau + np.sum(probs * excess, axis=-1) / alpha


def entropic_values(values, probs, tau: float) -> np.ndarray:
    values, probs = np.broadcast_arrays(np.asarray(values, float), np.asarray(probs, float))
    live = probs > 0
    m = np.max(np.where(live, values, -np.inf), axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = np.where(live, probs * np.exp(tau * (values - m[..., None])), 0.0)
    return m + np.log(np.sum(terms, axis=-1)) / tau


def risk_values(risk: RiskSpec, values, probs) -> np.ndarray:
    """Evaluate ``risk`` along the last axis of broadcast (values, probs)."""
    if risk.kind == "expectation":
        return expectation_values(values, probs)
    if risk.kind == "var":
        return var_values(values, probs, risk.alpha)
    if risk.kind == "avar":
        return avar_values(values, probs, risk.alpha)
    return entropic_values(values, probs, risk.tau)


def robust_risk_values(risk: RiskSpec, values, candidates) -> np.ndarray:
    """Max over candidate probability vectors.

    ``values`` has shape (..., K) and ``candidates`` (M, K); returns shape (...).
    """
    candidates = np.asarray(candidates, float)
    if candidates.ndim == 1:
        candidates = candidates[None, :]
    values = np.asarray(values, float)
    per_member = risk_values(risk, values[..., None, :], candidates)
    return per_member.max(axis=-1)


# ---------------------------------------------------------------------------
# functionals on FiniteDistribution


def _check_alpha(alpha: float, upper_closed: bool) -> float:
    alpha = float(alpha)
    ok = alpha > 0 and (alpha <= 1 if upper_closed else alpha < 1)
    if not ok:
        rng = "(0,1]" if upper_closed else "(0,1)"
        raise AlphaOutOfRangeError(f"alpha={alpha!r} not in {rng}")
    return alpha


def expectation(dist: FiniteDistribution) -> float:
    return float(expectation_values(dist.atoms, dist.probs))


def var(dist: FiniteDistribution, alpha: float) -> float:
    """Value-at-Risk: smallest atom whose cdf reaches 1 - alpha."""
    alpha = _check_alpha(alpha, upper_closed=False)
    return float(var_values(dist.atoms, dist.probs, alpha))


def avar(dist: FiniteDistribution, alpha: float) -> float:
    """Average Value-at-Risk, tau + E[Z - tau]_+ / alpha at tau = VaR."""
    alpha = _check_alpha(alpha, upper_closed=True)
    return float(avar_values(dist.atoms, dist.probs, alpha))


def entropic(dist: FiniteDistribution, tau: float) -> float:
    """tau^-1 log E[exp(tau Z)] via a max-shifted log-sum-exp."""
    tau = float(tau)
    if not (tau > 0 and np.isfinite(tau)):
        raise TauOutOfRangeError(f"tau={tau!r} must be positive")
    return float(entropic_values(dist.atoms, dist.probs, tau))


def evaluate(risk: RiskSpec, dist: FiniteDistribution) -> float:
    if risk.kind == "expectation":
        return expectation(dist)
    if risk.kind == "var":
        return var(dist, risk.alpha)
    if risk.kind == "avar":
        return avar(dist, risk.alpha)
    return entropic(dist, risk.tau)


def robust_evaluate(risk: RiskSpec, dists: Sequence[FiniteDistribution]) -> tuple[float, int]:
    """Worst case over a finite ambiguity set; ties resolve to the smallest index."""
    if len(dists) == 0:
        raise EmptyAmbiguitySetError("ambiguity set is empty")
    values = [evaluate(risk, d) for d in dists]
    best = int(np.argmax(values))
    return values[best], best


# ---------------------------------------------------------------------------
# randomized axiom checks

AXIOMS = ("A1", "A2", "A3", "A4")
AXIOM_NAMES = {
    "A1": "monotonicity",
    "A2": "convexity",
    "A3": "translation equivariance",
    "A4": "positive homogeneity",
}


@dataclass
class AxiomResult:
    holds: bool
    trials: int
    max_violation: float
    counterexample: dict | None = None

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "trials": self.trials,
            "max_violation": self.max_violation,
            "counterexample": self.counterexample,
        }


@dataclass
class AxiomReport:
    risk: RiskSpec
    seed: int
    tol: float
    results: dict = field(default_factory=dict)

    def holds(self, axiom: str) -> bool:
        return self.results[axiom].holds

    def to_dict(self) -> dict:
        return {
            "risk": self.risk.to_dict(),
            "seed": self.seed,
            "tol": self.tol,
            "axioms": {a: r.to_dict() for a, r in self.results.items()},
        }


def _random_variable(rng: np.random.Generator, k: int, discrete: bool) -> np.ndarray:
    if discrete:
        return rng.integers(0, 4, size=k).astype(float)
    return np.round(rng.normal(scale=3.0, size=k), 6)


def check_axioms(risk: RiskSpec, trials: int = 200, seed: int = 0, tol: float = 1e-9) -> AxiomReport:
    """Randomized check of (A1)-(A4) on random variables over shared finite spaces.

    Half of the trials use small integer-valued variables, where convexity
    failures of quantile-type functionals show up readily. For every axiom
    the worst violating pair is kept as a counterexample.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {a: (0.0, None) for a in AXIOMS}

    def R(z, p):
        return float(risk_values(risk, z, p))

    def record(axiom, violation, payload):
        if violation > worst[axiom][0]:
            worst[axiom] = (violation, payload)

    for i in range(trials):
        k = int(rng.integers(2, 7))
        p = rng.dirichlet(np.ones(k))
        if i % 3 == 0:
            p = np.round(p * 10) + 1
            p = p / p.sum()
        discrete = i % 2 == 0
        z = _random_variable(rng, k, discrete)
        z2 = _random_variable(rng, k, discrete)
        base = {"probs": p.tolist(), "z": z.tolist()}

        up = z + np.where(rng.random(k) < 0.5, 0.0, np.abs(_random_variable(rng, k, discrete)))
        record("A1", R(z, p) - R(up, p), {**base, "z_prime": up.tolist(), "relation": "z <= z_prime"})

        t = float(rng.random())
        lhs = R(t * z + (1 - t) * z2, p)
        rhs = t * R(z, p) + (1 - t) * R(z2, p)
        record("A2", lhs - rhs, {**base, "z_prime": z2.tolist(), "weight": t, "lhs": lhs, "rhs": rhs})

        c = float(rng.uniform(-10, 10))
        record("A3", abs(R(z + c, p) - R(z, p) - c), {**base, "shift": c})

        c = float(rng.uniform(0, 5))
        lhs, rhs = R(c * z, p), c * R(z, p)
        record("A4", abs(lhs - rhs), {**base, "scale": c, "lhs": lhs, "rhs": rhs})

    report = AxiomReport(risk=risk, seed=seed, tol=tol)
    for a in AXIOMS:
        violation, payload = worst[a]
        holds = violation <= tol
        report.results[a] = AxiomResult(holds, trials, violation, None if holds else payload)
    return report
