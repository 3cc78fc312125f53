"""Risk-averse Markov decision processes with (state, action)-rectangular ambiguity."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dp import IterationResult, greedy, robust_backup, value_iteration
from .errors import (
    EnumerationTooLargeError,
    FiniteHorizonModelError,
    InfiniteHorizonModelError,
    InvalidModelError,
    UnresolvedAmbiguityError,
)
from .measures import INPUT_MASS_TOL
from .risk import RiskSpec, parse_profile, risk_values

MAX_SELECTIONS = 10**4
MAX_STATIC_EVALUATIONS = 2 * 10**5


def _candidates(raw, width: int, where: str) -> np.ndarray:
    if isinstance(raw, dict):
        raw = raw["candidates"]
    arr = np.array(raw, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidModelError(f"{where}: need a nonempty list of candidate kernels")
    if arr.shape[1] != width:
        raise InvalidModelError(f"{where}: kernel has {arr.shape[1]} atoms, next stage has {width} states")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidModelError(f"{where}: kernel entries must be finite and nonnegative")
    mass = arr.sum(axis=1)
    if np.any(np.abs(mass - 1.0) > INPUT_MASS_TOL):
        raise InvalidModelError(f"{where}: kernel rows sum to {mass.tolist()}")
    off = np.abs(mass - 1.0) > 1e-12  # leave already-normalized rows alone so rebuilding is idempotent
    arr[off] /= mass[off, None]
    return arr


@dataclass(frozen=True, eq=False)
class _Stage:
    """Flattened (state, action) pairs for one stage, padded to a common candidate count."""

    n_states: int
    n_next: int
    max_actions: int
    pair_state: np.ndarray
    pair_action: np.ndarray
    index: np.ndarray  # (S, Amax) -> pair id or -1
    kernels: np.ndarray  # (P, Mmax, S')
    counts: np.ndarray  # (P,)
    costs: np.ndarray  # (P, S')

    def backup(self, risk: RiskSpec, V_next: np.ndarray, beta: float = 1.0):
        Z = self.costs + beta * V_next[None, :]
        q, nature = robust_backup(risk, Z, self.kernels)
        table = np.full((self.n_states, self.max_actions), np.inf)
        table[self.pair_state, self.pair_action] = q
        V, policy = greedy(table)
        return V, policy, nature


class MdpModel:
    """Finite MDP: per stage, per state and action, candidate kernels over next states.

    ``kernels[t][s][a]`` is an (M, S_next) array-like (a single row means no
    ambiguity) and ``cost[t][s][a]`` the cost vector indexed by next state.
    A model with ``discount`` set is stationary and has exactly one stage.
    """

    def __init__(
        self,
        kernels: Sequence,
        cost: Sequence,
        terminal: Sequence[float] | None = None,
        discount: float | None = None,
        initial_state: int = 0,
    ):
        T = len(kernels)
        if T == 0:
            raise InvalidModelError("model has no stages")
        if len(cost) != T:
            raise InvalidModelError(f"{T} kernel stages but {len(cost)} cost stages")
        if discount is not None:
            discount = float(discount)
            if not 0 < discount < 1:
                raise InvalidModelError(f"discount={discount!r} not in (0,1)")
            if T != 1:
                raise InvalidModelError("a discounted model takes exactly one stationary stage")
        states = [len(k) for k in kernels]
        if discount is not None:
            states.append(states[0])
        else:
            if terminal is None:
                raise InvalidModelError("finite-horizon model needs a terminal cost")
            states.append(len(terminal))
        if min(states) == 0:
            raise InvalidModelError("every stage needs at least one state")
        self.discount = discount
        self.states = tuple(states)
        self.kernels = []
        self.cost = []
        stages = []
        for t in range(T):
            S, S_next = states[t], states[t + 1]
            if len(cost[t]) != S:
                raise InvalidModelError(f"stage {t}: cost table has {len(cost[t])} states, expected {S}")
            k_t, c_t = [], []
            pairs = []
            for s in range(S):
                n_act = len(kernels[t][s])
                if n_act == 0:
                    raise InvalidModelError(f"stage {t} state {s}: no actions")
                if len(cost[t][s]) != n_act:
                    raise InvalidModelError(f"stage {t} state {s}: cost has {len(cost[t][s])} actions, kernels {n_act}")
                ks, cs = [], []
                for a in range(n_act):
                    where = f"stage {t} state {s} action {a}"
                    kern = _candidates(kernels[t][s][a], S_next, where)
                    c = np.array(cost[t][s][a], dtype=float).ravel()
                    if c.shape != (S_next,) or not np.all(np.isfinite(c)):
                        raise InvalidModelError(f"{where}: cost must be {S_next} finite reals")
                    kern.setflags(write=False)
                    c.setflags(write=False)
                    ks.append(kern)
                    cs.append(c)
                    pairs.append((s, a, kern, c))
                k_t.append(ks)
                c_t.append(cs)
            self.kernels.append(k_t)
            self.cost.append(c_t)
            stages.append(self._compile(S, S_next, pairs))
        self._stages = stages
        self.actions = tuple(tuple(len(ks) for ks in k_t) for k_t in self.kernels)
        if terminal is None:
            terminal = np.zeros(states[-1])
        term = np.array(terminal, dtype=float).ravel()
        if term.shape != (states[-1],) or not np.all(np.isfinite(term)):
            raise InvalidModelError(f"terminal cost must be {states[-1]} finite reals")
        term.setflags(write=False)
        self.terminal = term
        if not 0 <= int(initial_state) < states[0]:
            raise InvalidModelError(f"initial_state={initial_state!r} out of range")
        self.initial_state = int(initial_state)

    @staticmethod
    def _compile(S: int, S_next: int, pairs) -> _Stage:
        P = len(pairs)
        m_max = max(p[2].shape[0] for p in pairs)
        a_max = max(p[1] for p in pairs) + 1
        kern = np.empty((P, m_max, S_next))
        costs = np.empty((P, S_next))
        counts = np.empty(P, dtype=int)
        index = np.full((S, a_max), -1, dtype=int)
        ps = np.empty(P, dtype=int)
        pa = np.empty(P, dtype=int)
        for i, (s, a, k, c) in enumerate(pairs):
            m = k.shape[0]
            kern[i, :m] = k
            kern[i, m:] = k[0]  # padding repeats a real candidate, so the max is unchanged
            costs[i] = c
            counts[i] = m
            index[s, a] = i
            ps[i], pa[i] = s, a
        return _Stage(S, S_next, a_max, ps, pa, index, kern, counts, costs)

    @property
    def horizon(self) -> int | None:
        return None if self.discount is not None else len(self.kernels)

    @property
    def n_stages(self) -> int:
        return len(self.kernels)

    def candidate_counts(self, t: int) -> np.ndarray:
        return self._stages[t].counts

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {}
        if self.discount is None:
            d["stages"] = self.n_stages
            d["states"] = list(self.states)
            d["terminal"] = self.terminal.tolist()
        else:
            d["discount"] = self.discount
            d["states"] = self.states[0]
        d["actions"] = [list(a) for a in self.actions]
        d["kernels"] = [[[{"candidates": k.tolist()} for k in ks] for ks in k_t] for k_t in self.kernels]
        d["cost"] = [[[c.tolist() for c in cs] for cs in c_t] for c_t in self.cost]
        d["initial_state"] = self.initial_state
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MdpModel":
        kernels = d["kernels"]
        discount = d.get("discount")
        if "stages" in d and int(d["stages"]) != len(kernels):
            raise InvalidModelError(f"'stages'={d['stages']} but {len(kernels)} kernel stages given")
        model = cls(kernels, d["cost"], d.get("terminal"), discount, d.get("initial_state", 0))
        if "states" in d:
            states = d["states"]
            expect = model.states[0] if isinstance(states, int) else list(model.states)
            if states != expect:
                raise InvalidModelError(f"'states'={states} disagrees with kernel shapes {expect}")
        if "actions" in d:
            acts = d["actions"]
            if acts and not isinstance(acts[0], list):
                acts = [acts]
            if [list(a) for a in acts] != [list(a) for a in model.actions]:
                raise InvalidModelError("'actions' disagrees with kernel shapes")
        return model


# ---------------------------------------------------------------------------
# finite horizon


def _require_finite(model: MdpModel):
    if model.discount is not None:
        raise InfiniteHorizonModelError("operation needs a finite-horizon model")


def _nature_lists(model: MdpModel, t: int, nature_flat: np.ndarray) -> list:
    st = model._stages[t]
    return [[int(nature_flat[st.index[s, a]]) for a in range(model.actions[t][s])] for s in range(st.n_states)]


def solve_mdp_game(model: MdpModel, profile) -> tuple[list, list, list]:
    """Backward induction with a worst-case kernel per (stage, state, action).

    Returns value functions V_1..V_{T+1}, the smallest-index greedy policy and
    nature's smallest-index argmax selection.
    """
    _require_finite(model)
    risks = parse_profile(profile, model.n_stages)
    T = model.n_stages
    V = [None] * (T + 1)
    policy = [None] * T
    nature = [None] * T
    V[T] = model.terminal.copy()
    for t in range(T - 1, -1, -1):
        V[t], policy[t], flat = model._stages[t].backup(risks[t], V[t + 1])
        nature[t] = _nature_lists(model, t, flat)
    return V, policy, nature


def solve_mdp_finite(model: MdpModel, profile) -> tuple[list, list]:
    """Risk-averse dynamic programming; the inner sup runs over candidate kernels."""
    V, policy, _ = solve_mdp_game(model, profile)
    return V, policy


def _policy_actions(model: MdpModel, t: int, policy_t) -> np.ndarray:
    acts = np.asarray(policy_t, dtype=int).ravel()
    S = model.states[t]
    if acts.shape != (S,):
        raise InvalidModelError(f"stage {t}: policy has {acts.size} entries for {S} states")
    limits = np.array(model.actions[t])
    if np.any(acts < 0) or np.any(acts >= limits):
        raise InvalidModelError(f"stage {t}: policy selects an unavailable action")
    return acts


def evaluate_policy_nested(model: MdpModel, policy: Sequence, profile, nature: Sequence | None = None) -> float:
    """Nested risk of a Markov policy from the initial state.

    The nested value depends on the history only through the current state,
    so a state-indexed backward pass suffices. Ambiguous kernels must be
    resolved by ``nature``.
    """
    _require_finite(model)
    risks = parse_profile(profile, model.n_stages)
    T = model.n_stages
    if len(policy) != T:
        raise InvalidModelError(f"policy covers {len(policy)} stages, model has {T}")
    V = model.terminal
    for t in range(T - 1, -1, -1):
        st = model._stages[t]
        acts = _policy_actions(model, t, policy[t])
        pairs = st.index[np.arange(st.n_states), acts]
        if nature is None:
            if np.any(st.counts[pairs] > 1):
                s = int(np.flatnonzero(st.counts[pairs] > 1)[0])
                raise UnresolvedAmbiguityError(
                    f"stage {t} state {s}: {int(st.counts[pairs[s]])} candidate kernels and no nature policy"
                )
            members = np.zeros(st.n_states, dtype=int)
        else:
            members = np.array([nature[t][s][a] for s, a in enumerate(acts)], dtype=int)
            if np.any(members < 0) or np.any(members >= st.counts[pairs]):
                raise InvalidModelError(f"stage {t}: nature selects a missing candidate")
        probs = st.kernels[pairs, members]
        V = risk_values(risks[t], st.costs[pairs] + V[None, :], probs)
    return float(V[model.initial_state])


# ---------------------------------------------------------------------------
# static adversary


@dataclass
class StaticRobustResult:
    """Static adversary: one candidate index per stage, fixed before any data.

    ``value`` is min over Markov policies of the max over selections.
    ``sup_min`` swaps the order (max over selections of the optimal
    non-robust value); ``sup_min <= value <= dynamic``.
    """

    value: float
    selection: list
    policy: list
    sup_min: float
    sup_min_selection: list
    dynamic: float
    policies: int
    selections: int

    @property
    def gap(self) -> float:
        return self.dynamic - self.value

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "selection": self.selection,
            "policy": [p.tolist() for p in self.policy],
            "sup_min": self.sup_min,
            "sup_min_selection": self.sup_min_selection,
            "dynamic": self.dynamic,
            "gap": self.gap,
            "policies": self.policies,
            "selections": self.selections,
        }


def _stage_selection_counts(model: MdpModel) -> list[int]:
    out = []
    for t, st in enumerate(model._stages):
        m = int(st.counts.max())
        if np.any((st.counts != 1) & (st.counts != m)):
            raise InvalidModelError(
                f"stage {t}: a static selection needs every (state, action) to list 1 or {m} candidates"
            )
        out.append(m)
    return out


def _reachable(model: MdpModel) -> list[np.ndarray]:
    reach = [np.zeros(S, dtype=bool) for S in model.states]
    reach[0][model.initial_state] = True
    for t, st in enumerate(model._stages):
        live = reach[t][st.pair_state]
        reach[t + 1] = np.any(st.kernels[live] > 0, axis=(0, 1))
    return reach


def static_robust_bruteforce(
    model: MdpModel,
    profile,
    max_selections: int = MAX_SELECTIONS,
    max_evaluations: int = MAX_STATIC_EVALUATIONS,
) -> StaticRobustResult:
    """Exhaustive static-adversary value against the dynamic robust value."""
    _require_finite(model)
    risks = parse_profile(profile, model.n_stages)
    T = model.n_stages
    counts = _stage_selection_counts(model)
    n_sel = int(np.prod(counts, dtype=object))
    if n_sel > max_selections:
        raise EnumerationTooLargeError(f"{n_sel} stagewise kernel selections exceed the cap {max_selections}")
    sel = np.array(list(itertools.product(*[range(m) for m in counts])), dtype=int).reshape(n_sel, T)

    reach = _reachable(model)
    slots = [(t, s) for t in range(T) for s in np.flatnonzero(reach[t]) if model.actions[t][s] > 1]
    n_pol = int(np.prod([model.actions[t][s] for t, s in slots], dtype=object))
    if n_pol * n_sel > max_evaluations:
        raise EnumerationTooLargeError(
            f"{n_pol} policies x {n_sel} selections exceed the cap {max_evaluations}"
        )

    def values(policy) -> np.ndarray:
        # nested value at the initial state for every selection at once
        V = np.broadcast_to(model.terminal, (n_sel, model.states[T]))
        for t in range(T - 1, -1, -1):
            st = model._stages[t]
            pairs = st.index[np.arange(st.n_states), policy[t]]
            member = np.minimum(sel[:, t][:, None], st.counts[pairs][None, :] - 1)  # (n_sel, S)
            probs = st.kernels[pairs[None, :], member]
            V = risk_values(risks[t], st.costs[pairs][None] + V[:, None, :], probs)
        return V[:, model.initial_state]

    base = [np.zeros(S, dtype=int) for S in model.states[:T]]
    best = None
    for choice in itertools.product(*[range(model.actions[t][s]) for t, s in slots]):
        policy = [b.copy() for b in base]
        for (t, s), a in zip(slots, choice):
            policy[t][s] = a
        vals = values(policy)
        worst = float(vals.max())
        if best is None or worst < best[0]:
            best = (worst, int(vals.argmax()), policy)

    sup_vals = np.empty(n_sel)
    for i in range(n_sel):
        V = model.terminal
        for t in range(T - 1, -1, -1):
            st = model._stages[t]
            member = np.minimum(sel[i, t], st.counts - 1)
            Z = st.costs + V[None, :]
            q = risk_values(risks[t], Z, st.kernels[np.arange(len(member)), member])
            table = np.full((st.n_states, st.max_actions), np.inf)
            table[st.pair_state, st.pair_action] = q
            V, _ = greedy(table)
        sup_vals[i] = V[model.initial_state]
    j = int(sup_vals.argmax())
    dynamic = float(solve_mdp_finite(model, risks)[0][0][model.initial_state])
    return StaticRobustResult(
        value=best[0],
        selection=sel[best[1]].tolist(),
        policy=best[2],
        sup_min=float(sup_vals[j]),
        sup_min_selection=sel[j].tolist(),
        dynamic=dynamic,
        policies=n_pol,
        selections=n_sel,
    )


# ---------------------------------------------------------------------------
# infinite horizon


def _require_discounted(model: MdpModel):
    if model.discount is None:
        raise FiniteHorizonModelError("operation needs a discounted (infinite-horizon) model")


def mdp_bellman(model: MdpModel, risk: RiskSpec, g) -> np.ndarray:
    """One application of the robust Bellman operator."""
    _require_discounted(model)
    g = np.asarray(g, dtype=float)
    return model._stages[0].backup(risk, g, model.discount)[0]


def mdp_value_iteration(model: MdpModel, risk: RiskSpec, tol: float = 1e-8, max_iter: int = 10**6) -> IterationResult:
    _require_discounted(model)
    st = model._stages[0]

    def step(g):
        V, policy, _ = st.backup(risk, g, model.discount)
        return V, policy

    return value_iteration(step, model.states[0], model.discount, tol, max_iter)
