"""Risk-averse stochastic optimal control on finite state, control and noise grids."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .dp import IterationResult, greedy, robust_backup, value_iteration
from .errors import (
    FiniteHorizonModelError,
    InfiniteHorizonModelError,
    InvalidModelError,
    KappaNotPositiveError,
    UnresolvedAmbiguityError,
)
from .measures import INPUT_MASS_TOL, SampleBatch, make_distribution
from .mdp import MdpModel
from .nested import Node, ScenarioTree
from .risk import RiskSpec, parse_profile
from .saa import CoverageReport, _check_reps, kappa, n_exact, replication_rng


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class SocModel:
    """x_{t+1} = phi_t[x, u, k] with noise atom k drawn from one of the stage's candidate laws.

    Per stage: ``phi[t]`` and ``cost[t]`` are (S, A_t, K_t) tables and
    ``noise[t]`` an (M_t, K_t) array of candidate probability vectors. A
    model with ``discount`` set is stationary and has exactly one stage.
    ``coords`` optionally attaches coordinates to states for audits.
    """

    def __init__(
        self,
        phi: Sequence,
        cost: Sequence,
        noise: Sequence,
        terminal: Sequence[float] | None = None,
        discount: float | None = None,
        coords: Sequence | None = None,
    ):
        T = len(phi)
        if T == 0:
            raise InvalidModelError("model has no stages")
        if len(cost) != T or len(noise) != T:
            raise InvalidModelError(f"{T} dynamics stages, {len(cost)} cost stages, {len(noise)} noise stages")
        if discount is not None:
            discount = float(discount)
            if not 0 < discount < 1:
                raise InvalidModelError(f"discount={discount!r} not in (0,1)")
            if T != 1:
                raise InvalidModelError("a discounted model takes exactly one stationary stage")
        self.discount = discount
        self.phi, self.cost, self.noise = [], [], []
        S = None
        for t in range(T):
            p = np.array(phi[t])
            if p.ndim != 3 or p.size == 0:
                raise InvalidModelError(f"stage {t}: dynamics table must be a nonempty (states, controls, noise) array")
            if not np.issubdtype(p.dtype, np.integer):
                if not np.all(np.equal(np.mod(p, 1), 0)):
                    raise InvalidModelError(f"stage {t}: dynamics entries must be state indices")
                p = p.astype(int)
            S = p.shape[0] if S is None else S
            if p.shape[0] != S:
                raise InvalidModelError(f"stage {t}: {p.shape[0]} states, expected {S}")
            if np.any(p < 0) or np.any(p >= S):
                raise InvalidModelError(f"stage {t}: dynamics table points outside the state grid")
            c = np.array(cost[t], dtype=float)
            if c.shape != p.shape or not np.all(np.isfinite(c)):
                raise InvalidModelError(f"stage {t}: cost table must be finite with shape {p.shape}")
            raw = noise[t]["candidates"] if isinstance(noise[t], dict) else noise[t]
            n = np.array(raw, dtype=float)
            if n.ndim == 1:
                n = n[None, :]
            if n.ndim != 2 or n.shape[0] == 0 or n.shape[1] != p.shape[2]:
                raise InvalidModelError(f"stage {t}: noise candidates must be vectors over {p.shape[2]} atoms")
            if not np.all(np.isfinite(n)) or np.any(n < 0):
                raise InvalidModelError(f"stage {t}: noise probabilities must be finite and nonnegative")
            mass = n.sum(axis=1)
            if np.any(np.abs(mass - 1) > INPUT_MASS_TOL):
                raise InvalidModelError(f"stage {t}: noise candidates sum to {mass.tolist()}")
            self.phi.append(_frozen(p, int))
            self.cost.append(_frozen(c))
            off = np.abs(mass - 1) > 1e-12
            n = n.copy()
            n[off] /= mass[off, None]
            self.noise.append(_frozen(n))
        self.n_states = S
        if terminal is None:
            if discount is None:
                raise InvalidModelError("finite-horizon model needs a terminal cost")
            terminal = np.zeros(S)
        term = np.array(terminal, dtype=float).ravel()
        if term.shape != (S,) or not np.all(np.isfinite(term)):
            raise InvalidModelError(f"terminal cost must be {S} finite reals")
        self.terminal = _frozen(term)
        self.coords = None if coords is None else _frozen(coords)
        if self.coords is not None and len(self.coords) != S:
            raise InvalidModelError("coords must list one point per state")

    @property
    def horizon(self) -> int | None:
        return None if self.discount is not None else len(self.phi)

    @property
    def n_stages(self) -> int:
        return len(self.phi)

    @property
    def controls(self) -> list[int]:
        return [p.shape[1] for p in self.phi]

    def with_noise(self, noise: Sequence) -> "SocModel":
        return SocModel(self.phi, self.cost, noise, self.terminal, self.discount, self.coords)

    def to_dict(self) -> dict:
        d: dict = {"horizon": self.n_stages} if self.discount is None else {"discount": self.discount}
        d.update(
            states=self.n_states,
            controls=self.controls,
            noise=[{"candidates": n.tolist()} for n in self.noise],
            phi=[p.tolist() for p in self.phi],
            cost=[c.tolist() for c in self.cost],
            terminal=self.terminal.tolist(),
        )
        if self.coords is not None:
            d["coords"] = self.coords.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SocModel":
        model = cls(d["phi"], d["cost"], d["noise"], d.get("terminal"), d.get("discount"), d.get("coords"))
        if "horizon" in d and int(d["horizon"]) != model.n_stages:
            raise InvalidModelError(f"'horizon'={d['horizon']} but {model.n_stages} stages given")
        if "states" in d and int(d["states"]) != model.n_states:
            raise InvalidModelError(f"'states'={d['states']} but tables have {model.n_states}")
        if "controls" in d:
            ctl = d["controls"]
            ctl = [ctl] * model.n_stages if isinstance(ctl, int) else list(ctl)
            if ctl != model.controls:
                raise InvalidModelError(f"'controls'={d['controls']} but tables have {model.controls}")
        return model


def _stage_q(model: SocModel, t: int, risk: RiskSpec, V_next: np.ndarray, beta: float = 1.0):
    Z = model.cost[t] + beta * V_next[model.phi[t]]  # (S, A, K)
    return robust_backup(risk, Z, model.noise[t])


def _require_finite(model: SocModel):
    if model.discount is not None:
        raise InfiniteHorizonModelError("operation needs a finite-horizon model")


def _require_discounted(model: SocModel):
    if model.discount is None:
        raise FiniteHorizonModelError("operation needs a discounted (infinite-horizon) model")


def solve_soc_finite(model: SocModel, profile) -> tuple[list, list]:
    """Backward induction V_t(x) = min_u max_P R^P[c_t + V_{t+1}(phi_t)].

    Returns V_1..V_{T+1} and the smallest-index greedy controls per stage.
    """
    V, policy, _ = solve_soc_game(model, profile)
    return V, policy


def solve_soc_game(model: SocModel, profile) -> tuple[list, list, list]:
    """As :func:`solve_soc_finite`, also returning nature's worst candidate per (t, x, u)."""
    _require_finite(model)
    risks = parse_profile(profile, model.n_stages)
    T = model.n_stages
    V = [None] * (T + 1)
    policy, nature = [None] * T, [None] * T
    V[T] = np.array(model.terminal)
    for t in range(T - 1, -1, -1):
        q, nature[t] = _stage_q(model, t, risks[t], V[t + 1])
        V[t], policy[t] = greedy(q)
    return V, policy, nature


def soc_bellman(model: SocModel, risk: RiskSpec, g) -> np.ndarray:
    """One application of the discounted robust Bellman operator."""
    _require_discounted(model)
    q, _ = _stage_q(model, 0, risk, np.asarray(g, dtype=float), model.discount)
    return q.min(axis=-1)


def soc_value_iteration(model: SocModel, risk: RiskSpec, tol: float = 1e-8, max_iter: int = 10**6) -> IterationResult:
    _require_discounted(model)

    def step(g):
        q, _ = _stage_q(model, 0, risk, g, model.discount)
        return greedy(q)

    return value_iteration(step, model.n_states, model.discount, tol, max_iter)


# ---------------------------------------------------------------------------
# empirical fixed point


def _noise_indices(samples) -> np.ndarray:
    vals = samples.values if isinstance(samples, SampleBatch) else np.asarray(samples)
    idx = np.asarray(vals).ravel()
    if idx.size == 0:
        raise InvalidModelError("no noise samples")
    if not np.all(np.equal(np.mod(idx, 1), 0)):
        raise InvalidModelError("noise samples must be atom indices")
    return idx.astype(int)


def empirical_noise(samples, n_atoms: int) -> np.ndarray:
    idx = _noise_indices(samples)
    if np.any(idx < 0) or np.any(idx >= n_atoms):
        raise InvalidModelError(f"noise sample outside atoms 0..{n_atoms - 1}")
    return np.bincount(idx, minlength=n_atoms) / idx.size


def _require_single_law(model: SocModel):
    if model.noise[0].shape[0] != 1:
        raise UnresolvedAmbiguityError("the empirical fixed point needs a single noise law")


def soc_empirical_value(
    model: SocModel,
    samples,
    risk: RiskSpec,
    tol: float = 1e-8,
    max_iter: int = 10**6,
    V_exact: np.ndarray | None = None,
) -> IterationResult:
    """Fixed point of the Bellman operator with the noise law replaced by its empirical measure.

    ``samples`` are noise atom indices. When ``V_exact`` is given the sup-norm
    distance to it is stored as ``result.deviation``.
    """
    _require_discounted(model)
    _require_single_law(model)
    emp = empirical_noise(samples, model.noise[0].shape[1])
    res = soc_value_iteration(model.with_noise([emp[None, :]]), risk, tol, max_iter)
    res.deviation = None if V_exact is None else float(np.max(np.abs(res.V - np.asarray(V_exact))))
    return res


def kappa_table(model: SocModel, alpha: float, V: np.ndarray) -> np.ndarray:
    """kappa_alpha of c(x,u,xi) + beta V(phi(x,u,xi)) for every (x, u)."""
    _require_single_law(model)
    Z = model.cost[0] + model.discount * np.asarray(V)[model.phi[0]]
    p = model.noise[0][0]
    S, A, _ = Z.shape
    out = np.empty((S, A))
    for x in range(S):
        for u in range(A):
            out[x, u] = kappa(make_distribution(Z[x, u], p), alpha)
    return out


def mc_soc_experiment(
    model: SocModel,
    alpha: float,
    eps: float,
    delta: float,
    reps: int = 500,
    seed: int = 0,
    tol: float | None = None,
    max_iter: int = 10**6,
) -> CoverageReport:
    """Coverage of ||V - V_N|| <= eps at N = n_exact(min kappa, delta).

    Both fixed points are computed to ``tol`` (default eps/4), so the event
    is decided with at most eps/2 of solver slack. Each replication also
    audits ||V - V_N|| <= (||(T - T_N)V|| + 2 tol) / (1 - beta) + 2 tol.
    """
    _require_discounted(model)
    _require_single_law(model)
    reps = _check_reps(reps)
    risk = RiskSpec("var", alpha=alpha)
    tol = eps / 4 if tol is None else float(tol)
    beta = model.discount
    exact = soc_value_iteration(model, risk, tol, max_iter)
    V = exact.V
    kap = kappa_table(model, alpha, V)
    if np.any(kap <= 0):
        x, u = (int(i) for i in np.argwhere(kap <= 0)[0])
        raise KappaNotPositiveError(
            f"kappa_alpha = 0 at state {x}, control {u}", state=x, control=u, level=1 - alpha
        )
    k_min = float(kap.min())
    n_used = n_exact(k_min, delta)
    p = model.noise[0][0]
    levels = np.cumsum(p)
    levels[-1] = 1.0
    T_V = soc_bellman(model, risk, V)
    hits, worst, violations, rows = 0, 0.0, 0, []
    for r in range(reps):
        u = replication_rng(seed, r).random(n_used)
        idx = np.minimum(np.searchsorted(levels, u, side="right"), len(p) - 1)
        emp_model = model.with_noise([empirical_noise(idx, len(p))[None, :]])
        V_N = soc_value_iteration(emp_model, risk, tol, max_iter).V
        dev = float(np.max(np.abs(V - V_N)))
        op_gap = float(np.max(np.abs(T_V - soc_bellman(emp_model, risk, V))))
        bound = (op_gap + 2 * tol) / (1 - beta) + 2 * tol
        violations += dev > bound + 1e-12
        hits += dev <= eps
        worst = max(worst, dev)
        rows.append({"rep": r, "deviation": dev, "operator_gap": op_gap, "hit": int(dev <= eps)})
    return CoverageReport(
        n_used, reps, hits / reps, worst, seed,
        extra={
            "kind": "soc", "alpha": alpha, "eps": eps, "delta": delta, "tol": tol,
            "kappa_min": k_min, "chain_violations": violations,
        },
        rows=rows,
    )


# ---------------------------------------------------------------------------
# conversions


def unroll_policy_tree(model: SocModel, policy: Sequence, x1: int) -> ScenarioTree:
    """Scenario tree of a Markov policy from ``x1``: one child per noise atom.

    Leaf values are accumulated stage costs plus the terminal cost, and each
    node carries the stage's candidate noise laws.
    """
    _require_finite(model)
    T = model.n_stages
    nodes: dict[int, dict] = {}
    leaf_values: dict[int, float] = {}
    frontier = [(0, int(x1), 0.0)]
    nodes[0] = {"stage": 1, "parent": None}
    next_id = 1
    for t in range(T):
        new = []
        for nid, x, acc in frontier:
            u = int(policy[t][x])
            K = model.phi[t].shape[2]
            kids = []
            for k in range(K):
                cid = next_id
                next_id += 1
                nodes[cid] = {"stage": t + 2, "parent": nid}
                kids.append(cid)
                new.append((cid, int(model.phi[t][x, u, k]), acc + float(model.cost[t][x, u, k])))
            nodes[nid]["children"] = kids
            nodes[nid]["candidates"] = model.noise[t]
        frontier = new
    for nid, x, acc in frontier:
        leaf_values[nid] = acc + float(model.terminal[x])
    built = [
        Node(nid, n["stage"], n["parent"], tuple(n.get("children", ())), n.get("candidates"))
        for nid, n in sorted(nodes.items())
    ]
    return ScenarioTree(T, built, leaf_values)


def soc_to_mdp(model: SocModel) -> MdpModel:
    """Equivalent MDP with next-state kernels pushed forward from the noise laws.

    Requires the stage cost to be a function of (x, u, next state) on atoms
    that carry mass.
    """
    kernels, costs = [], []
    S = model.n_states
    for t in range(model.n_stages):
        phi, c, noise = model.phi[t], model.cost[t], model.noise[t]
        live = np.any(noise > 0, axis=0)
        k_t, c_t = [], []
        for x in range(S):
            ks, cs = [], []
            for u in range(phi.shape[1]):
                nxt = phi[x, u]
                row = np.zeros(S)
                seen = np.zeros(S, dtype=bool)
                for k in np.flatnonzero(live):
                    s = nxt[k]
                    if seen[s] and row[s] != c[x, u, k]:
                        raise InvalidModelError(
                            f"stage {t} state {x} control {u}: cost differs across noise atoms leading to state {s}"
                        )
                    row[s], seen[s] = c[x, u, k], True
                kern = np.stack([np.bincount(nxt, weights=p, minlength=S) for p in noise])
                ks.append(kern)
                cs.append(row)
            k_t.append(ks)
            c_t.append(cs)
        kernels.append(k_t)
        costs.append(c_t)
    terminal = None if model.discount is not None else model.terminal
    return MdpModel(kernels, costs, terminal, model.discount)

