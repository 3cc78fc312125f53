"""Stagewise Bellman backups and the value-iteration driver shared by soc and mdp."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MaxIterExceededError, ParameterRangeError
from .risk import RiskSpec, risk_values


def robust_backup(risk: RiskSpec, Z: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case risk of each row of ``Z`` over its candidate laws.

    ``Z`` has shape (..., K) and ``probs`` (..., M, K), broadcast against each
    other. Returns the max over M and its smallest-index argmax.
    """
    per = risk_values(risk, np.asarray(Z)[..., None, :], probs)
    return per.max(axis=-1), per.argmax(axis=-1)


def greedy(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row minimum and smallest-index argmin; +inf marks absent actions."""
    return q.min(axis=-1), q.argmin(axis=-1)


@dataclass
class IterationResult:
    V: np.ndarray
    policy: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    deviation: float | None = None  # distance to a reference solution, when audited

    def to_dict(self) -> dict:
        d = {
            "V": self.V.tolist(),
            "policy": self.policy.tolist(),
            "iterations": self.iterations,
            "residuals": list(self.residuals),
        }
        if self.deviation is not None:
            d["deviation"] = self.deviation
        return d


def value_iteration(
    step: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    n_states: int,
    beta: float,
    tol: float = 1e-8,
    max_iter: int = 10**6,
) -> IterationResult:
    """Iterate ``step`` from zero until beta*r/(1-beta) <= tol.

    ``r`` is the sup-norm change of the last sweep, so the a-posteriori
    contraction bound puts the returned iterate within ``tol`` of the fixed
    point. The policy is greedy with respect to that iterate.
    """
    if not tol > 0:
        raise ParameterRangeError(f"tol={tol!r} must be positive")
    if int(max_iter) < 1:
        raise ParameterRangeError("max_iter must be >= 1")
    factor = beta / (1.0 - beta)
    g = np.zeros(n_states)
    residuals: list[float] = []
    for k in range(1, int(max_iter) + 1):
        nxt, _ = step(g)
        r = float(np.max(np.abs(nxt - g))) if n_states else 0.0
        residuals.append(r)
        g = nxt
        if factor * r <= tol:
            _, policy = step(g)
            return IterationResult(g, policy, k, residuals)
    raise MaxIterExceededError(
        f"no convergence after {max_iter} sweeps (last residual {residuals[-1]!r})",
        residuals=residuals,
    )
