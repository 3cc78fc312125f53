"""Stagewise min-max analysis: pure and mixed controls against a finite set of laws."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidMatrixError, InvalidModelError, MatrixTooLargeError
from .mdp import MdpModel
from .risk import RiskSpec, risk_values

MAX_ROWS = 16
MAX_COLS = 16
ENTROPIC_WARNING = (
    "entropic risk is not known to be concave in the law; "
    "a positive gap does not rule out an optimal non-randomized control"
)


def psi_matrix(data) -> np.ndarray:
    """Validate a payoff matrix: rows are controls, columns candidate laws."""
    try:
        psi = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrixError(f"not a numeric matrix: {exc}") from None
    if psi.ndim == 1 and psi.size:
        psi = psi[None, :]
    if psi.ndim != 2 or psi.size == 0:
        raise InvalidMatrixError("payoff matrix must be a nonempty 2-d array")
    if not np.all(np.isfinite(psi)):
        raise InvalidMatrixError("payoff matrix entries must be finite")
    psi.setflags(write=False)
    return psi


def psi_from_values(values, candidates, risk: RiskSpec) -> np.ndarray:
    """psi[u, m] = risk of ``values[u]`` under candidate law ``m``.

    ``values`` is (A, K); ``candidates`` is (M, K) shared by all rows or
    (A, M, K) per row.
    """
    values = np.asarray(values, dtype=float)
    cand = np.asarray(candidates, dtype=float)
    if cand.ndim == 2:
        cand = cand[None]
    return psi_matrix(risk_values(risk, values[:, None, :], cand))


def build_psi(model, state: int, V_next, risk: RiskSpec, stage: int = 0) -> np.ndarray:
    """Payoff matrix of one Bellman backup at ``state``.

    Entries are the inner risk of stage cost plus (discounted) next value,
    for each control and each candidate law of the stage.
    """
    V_next = np.asarray(V_next, dtype=float)
    beta = 1.0 if model.discount is None else model.discount
    if isinstance(model, MdpModel):
        kernels = model.kernels[stage][state]
        counts = {k.shape[0] for k in kernels}
        if len(counts) != 1:
            raise InvalidModelError(f"stage {stage} state {state}: actions list different numbers of candidate kernels")
        values = np.stack([c + beta * V_next for c in model.cost[stage][state]])
        return psi_from_values(values, np.stack(kernels), risk)
    phi, cost = model.phi[stage], model.cost[stage]
    if not 0 <= state < phi.shape[0]:
        raise IndexError(f"state {state} out of range")
    values = cost[state] + beta * V_next[phi[state]]
    return psi_from_values(values, model.noise[stage], risk)


def primal_minimax(psi) -> tuple[float, int]:
    """min over rows of the row max; smallest-index argmin."""
    psi = psi_matrix(psi)
    row_max = psi.max(axis=1)
    u = int(row_max.argmin())
    return float(row_max[u]), u


def dual_maximin(psi) -> tuple[float, int]:
    """max over columns of the column min; smallest-index argmax."""
    psi = psi_matrix(psi)
    col_min = psi.min(axis=0)
    j = int(col_min.argmax())
    return float(col_min[j]), j


def _equalize(psi: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray | None:
    """Mixed strategy on ``rows`` that equalizes payoffs across ``cols``."""
    k = len(rows)
    sub = psi[np.ix_(rows, cols)]
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = sub.T
    A[:k, k] = -1.0
    A[k, :k] = 1.0
    b = np.zeros(k + 1)
    b[k] = 1.0
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    q = sol[:k]
    if not np.all(np.isfinite(q)) or np.any(q < -1e-12):
        return None
    out = np.zeros(psi.shape[0])
    out[rows] = np.maximum(q, 0.0)
    return out / out.sum()


def randomized_value(psi) -> tuple[float, np.ndarray]:
    """Value of the matrix game where the row player mixes over controls.

    Solved as a linear program, then snapped to the exact equalizing
    strategy on the optimal supports when that is square and nonsingular.
    The reported value is the worst column payoff of the returned mix,
    clamped into [maximin, minimax].
    """
    psi = psi_matrix(psi)
    n, m = psi.shape
    if n > MAX_ROWS or m > MAX_COLS:
        raise MatrixTooLargeError(f"{n}x{m} exceeds the {MAX_ROWS}x{MAX_COLS} budget")
    primal, u_star = primal_minimax(psi)
    dual, _ = dual_maximin(psi)
    pure = np.zeros(n)
    pure[u_star] = 1.0
    if primal == dual or n == 1:
        return primal, pure

    # variables (q_1..q_n, v): minimize v s.t. psi^T q <= v, sum q = 1
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = linprog(
        c,
        A_ub=np.hstack([psi.T, -np.ones((m, 1))]),
        b_ub=np.zeros(m),
        A_eq=np.hstack([np.ones((1, n)), np.zeros((1, 1))]),
        b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)],
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    q = np.maximum(res.x[:n], 0.0)
    q /= q.sum()
    best_val = float((q @ psi).max())
    duals = -np.asarray(res.ineqlin.marginals)
    rows = np.flatnonzero(q > 1e-9)
    cols = np.flatnonzero(duals > 1e-9)
    if len(rows) == len(cols):
        snapped = _equalize(psi, rows, cols)
        if snapped is not None:
            val = float((snapped @ psi).max())
            if val <= best_val + 1e-9:
                q, best_val = snapped, val
    if best_val >= primal:
        return primal, pure
    return max(best_val, dual), q


@dataclass
class SaddleReport:
    primal: float
    dual: float
    randomized: float
    gap: float
    saddle: tuple[int, int] | None
    mix: np.ndarray
    primal_row: int
    dual_col: int
    warning: str | None = None
    exact: bool = field(default=False)  # saddle inequalities hold without tolerance

    def to_dict(self) -> dict:
        return {
            "primal": self.primal,
            "dual": self.dual,
            "randomized": self.randomized,
            "gap": self.gap,
            "saddle": None if self.saddle is None else list(self.saddle),
            "mix": self.mix.tolist(),
            "warning": self.warning,
        }


def is_saddle(psi, u: int, j: int, tol: float = 0.0) -> bool:
    """u minimizes column j and j maximizes row u, up to ``tol``."""
    psi = psi_matrix(psi)
    v = psi[u, j]
    return bool(np.all(v <= psi[:, j] + tol) and np.all(v >= psi[u, :] - tol))


def analyze(psi, tol: float = 1e-9, risk: RiskSpec | None = None) -> SaddleReport:
    """Pure vs mixed values of the stagewise game, with saddle detection.

    A saddle is reported iff minimax - maximin <= tol; the returned pair is
    checked against both saddle inequalities before it is returned.
    """
    psi = psi_matrix(psi)
    if tol < 0:
        raise InvalidMatrixError("tol must be nonnegative")
    primal, u = primal_minimax(psi)
    dual, j = dual_maximin(psi)
    randomized, mix = randomized_value(psi)
    gap = primal - dual
    saddle = None
    exact = False
    if gap <= tol:
        pair = (u, j)
        if not is_saddle(psi, u, j, 0.0):
            exact_pairs = [(a, b) for a in range(psi.shape[0]) for b in range(psi.shape[1]) if is_saddle(psi, a, b, 0.0)]
            if exact_pairs:
                pair = exact_pairs[0]
        exact = is_saddle(psi, *pair, 0.0)
        if not (exact or is_saddle(psi, *pair, tol)):
            raise AssertionError(f"gap {gap!r} <= tol but {pair} fails the saddle check")
        saddle = pair
    warning = ENTROPIC_WARNING if risk is not None and risk.kind == "entropic" else None
    return SaddleReport(primal, dual, randomized, gap, saddle, mix, u, j, warning, exact)
