"""Scenario trees, conditional risk at a node and nested (multistage) risk."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    AmbiguousCandidatesError,
    ChildValueMissingError,
    InvalidTreeError,
    LeafNodeError,
    MemberOutOfRangeError,
    PathTableIncompleteError,
)
from .measures import INPUT_MASS_TOL, FiniteDistribution
from .risk import RiskSpec, parse_profile, risk_values


@dataclass(frozen=True, eq=False)
class Node:
    id: int
    stage: int
    parent: int | None
    children: tuple[int, ...]
    # (M, n_children) array: one row per candidate child law
    candidates: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ScenarioTree:
    """A staged tree with stages 1..T+1; leaves sit at stage T+1.

    Each non-leaf node carries one or more candidate laws over its children
    (one row per candidate). A single candidate everywhere is the ordinary,
    non-robust case.
    """

    def __init__(self, stages: int, nodes: Sequence[Node], leaf_values: Mapping[int, float]):
        self.stages = int(stages)
        self.nodes: dict[int, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise InvalidTreeError(f"duplicate node id {node.id}")
            self.nodes[node.id] = node
        self.leaf_values = {int(k): float(v) for k, v in leaf_values.items()}
        self._validate()
        self.by_stage: dict[int, list[int]] = {t: [] for t in range(1, self.stages + 2)}
        for node in self.nodes.values():
            self.by_stage[node.stage].append(node.id)

    def _validate(self):
        if self.stages < 1:
            raise InvalidTreeError("a tree needs at least one stage")
        roots = [n for n in self.nodes.values() if n.parent is None]
        if len(roots) != 1 or roots[0].stage != 1:
            raise InvalidTreeError("need exactly one root, at stage 1")
        self.root = roots[0].id
        fixed = {}
        for node in self.nodes.values():
            if not 1 <= node.stage <= self.stages + 1:
                raise InvalidTreeError(f"node {node.id} has stage {node.stage} outside 1..{self.stages + 1}")
            if node.parent is not None:
                parent = self.nodes.get(node.parent)
                if parent is None or node.id not in parent.children or parent.stage != node.stage - 1:
                    raise InvalidTreeError(f"node {node.id} is not a child of its parent {node.parent}")
            for c in node.children:
                child = self.nodes.get(c)
                if child is None or child.parent != node.id:
                    raise InvalidTreeError(f"child {c} of node {node.id} does not point back")
            if node.is_leaf:
                if node.stage != self.stages + 1:
                    raise InvalidTreeError(f"leaf {node.id} at stage {node.stage}, expected {self.stages + 1}")
                if node.id not in self.leaf_values or not np.isfinite(self.leaf_values[node.id]):
                    raise InvalidTreeError(f"leaf {node.id} has no finite value")
                continue
            cand = np.atleast_2d(np.asarray(node.candidates, dtype=float))
            if cand.size == 0 or cand.shape[1] != len(node.children):
                raise InvalidTreeError(
                    f"node {node.id}: candidate laws must have one entry per child ({len(node.children)})"
                )
            if np.any(cand < 0) or np.any(np.abs(cand.sum(axis=1) - 1) > INPUT_MASS_TOL):
                raise InvalidTreeError(f"node {node.id}: candidate laws must be probability vectors")
            cand = cand / cand.sum(axis=1, keepdims=True)
            cand.setflags(write=False)
            fixed[node.id] = cand
        for nid, cand in fixed.items():
            object.__setattr__(self.nodes[nid], "candidates", cand)
        reached = {self.root}
        frontier = [self.root]
        while frontier:
            nid = frontier.pop()
            for c in self.nodes[nid].children:
                reached.add(c)
                frontier.append(c)
        if len(reached) != len(self.nodes):
            raise InvalidTreeError("some nodes are not reachable from the root")

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    @property
    def leaves(self) -> list[int]:
        return self.by_stage[self.stages + 1]

    def candidate_count(self, node_id: int) -> int:
        return len(self.nodes[node_id].candidates)

    def non_leaves(self) -> list[int]:
        return [nid for t in range(1, self.stages + 1) for nid in self.by_stage[t]]

    def with_leaf_values(self, leaf_values: Mapping[int, float]) -> "ScenarioTree":
        return ScenarioTree(self.stages, list(self.nodes.values()), leaf_values)

    def with_candidates(self, selection: Mapping[int, int]) -> "ScenarioTree":
        """Copy keeping only the selected candidate at each listed node."""
        nodes = []
        for n in self.nodes.values():
            if n.id in selection:
                n = Node(n.id, n.stage, n.parent, n.children, n.candidates[[selection[n.id]]])
            nodes.append(n)
        return ScenarioTree(self.stages, nodes, self.leaf_values)

    def to_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            entry = {"id": n.id, "stage": n.stage, "parent": n.parent, "children": list(n.children)}
            if not n.is_leaf:
                entry["candidates"] = [{"probs": row.tolist()} for row in n.candidates]
            nodes.append(entry)
        return {
            "stages": self.stages,
            "nodes": nodes,
            "leaf_values": {str(k): v for k, v in sorted(self.leaf_values.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioTree":
        try:
            nodes = []
            for e in d["nodes"]:
                cands = e.get("candidates")
                if cands is not None:
                    cands = [c["probs"] if isinstance(c, dict) else c for c in cands]
                parent = e.get("parent")
                nodes.append(
                    Node(
                        int(e["id"]),
                        int(e["stage"]),
                        None if parent is None else int(parent),
                        tuple(int(c) for c in e.get("children", [])),
                        cands,
                    )
                )
            leaf_values = {int(k): float(v) for k, v in d["leaf_values"].items()}
            return cls(int(d["stages"]), nodes, leaf_values)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidTreeError):
                raise
            raise InvalidTreeError(f"malformed tree: {exc}") from exc


def _child_values(tree: ScenarioTree, node: Node, values: Mapping[int, float] | None) -> np.ndarray:
    out = np.empty(len(node.children))
    for i, c in enumerate(node.children):
        if values is not None and c in values:
            out[i] = values[c]
        elif c in tree.leaf_values:
            out[i] = tree.leaf_values[c]
        else:
            raise ChildValueMissingError(f"no value assigned to child {c} of node {node.id}")
    return out


def conditional_risk_at_node(
    tree: ScenarioTree,
    node_id: int,
    risk: RiskSpec,
    member: int = 0,
    values: Mapping[int, float] | None = None,
) -> float:
    """Risk of the children's values under one candidate conditional law.

    ``values`` supplies values for non-leaf children (stage values computed
    earlier in a backward pass); leaves default to ``tree.leaf_values``.
    """
    node = tree.node(node_id)
    if node.is_leaf:
        raise LeafNodeError(f"node {node_id} is a leaf")
    if not 0 <= member < len(node.candidates):
        raise MemberOutOfRangeError(f"node {node_id} has {len(node.candidates)} candidates, asked for {member}")
    z = _child_values(tree, node, values)
    return float(risk_values(risk, z, node.candidates[member]))


@dataclass
class NestedResult:
    value: float
    node_values: dict[int, float]
    # nodes reached with probability zero under every candidate along the path
    off_support: list[int]
    # for robust evaluation: the maximizing candidate at each node
    selection: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "node_values": {str(k): v for k, v in sorted(self.node_values.items())},
            "off_support": sorted(self.off_support),
            "selection": {str(k): v for k, v in sorted(self.selection.items())},
        }


def _off_support(tree: ScenarioTree) -> list[int]:
    off = []
    frontier = [(tree.root, False)]
    while frontier:
        nid, dead = frontier.pop()
        if dead:
            off.append(nid)
        node = tree.node(nid)
        if node.is_leaf:
            continue
        reach = node.candidates.max(axis=0) > 0
        for c, r in zip(node.children, reach):
            frontier.append((c, dead or not r))
    return off


def nested_values(tree: ScenarioTree, profile, robust: bool = True) -> NestedResult:
    """Backward recursion from the leaves; at each node the stage risk is
    applied to the children's values under (the worst of) its candidate laws."""
    profile = parse_profile(profile, tree.stages)
    if not robust:
        for nid in tree.non_leaves():
            if tree.candidate_count(nid) > 1:
                raise AmbiguousCandidatesError(
                    f"node {nid} has {tree.candidate_count(nid)} candidates; use robust_nested_evaluate"
                )
    values: dict[int, float] = dict(tree.leaf_values)
    selection: dict[int, int] = {}
    for t in range(tree.stages, 0, -1):
        risk = profile[t - 1]
        for nid in tree.by_stage[t]:
            node = tree.node(nid)
            z = _child_values(tree, node, values)
            per_member = risk_values(risk, z[None, :], node.candidates)
            best = int(np.argmax(per_member))
            values[nid] = float(per_member[best])
            selection[nid] = best
    return NestedResult(values[tree.root], values, _off_support(tree), selection)


def nested_evaluate(tree: ScenarioTree, profile) -> float:
    """Nested risk of the leaf values; every node must have one candidate."""
    return nested_values(tree, profile, robust=False).value


def robust_nested_evaluate(tree: ScenarioTree, profile) -> float:
    """Nested risk with a per-node supremum over candidate laws."""
    return nested_values(tree, profile, robust=True).value


def build_product_tree(
    marginals: Sequence[FiniteDistribution | Sequence[FiniteDistribution]],
    leaf_value_fn: Mapping[tuple, float] | Callable[[tuple], float],
) -> ScenarioTree:
    """Tree of the product law P_1 x ... x P_T.

    Each stage-t node has one child per atom of ``marginals[t-1]`` and carries
    that marginal's probabilities; passing a list of distributions sharing
    one atom set at a stage gives every stage-t node the same candidate list.
    ``leaf_value_fn`` maps atom-index paths (tuples) to leaf values, either as
    a table or a callable.
    """
    stage_cands = []
    for m in marginals:
        group = list(m) if isinstance(m, (list, tuple)) else [m]
        k = len(group[0])
        if any(len(g) != k for g in group):
            raise InvalidTreeError("candidate marginals at one stage must share an atom count")
        stage_cands.append(np.array([g.probs for g in group]))
    T = len(stage_cands)
    if T < 1:
        raise InvalidTreeError("need at least one marginal")
    nodes: list[Node] = []
    leaf_values: dict[int, float] = {}
    # breadth-first ids; paths record atom indices from the root
    level = [((), 0, None)]
    next_id = 1
    pending = []
    for t in range(1, T + 2):
        new_level = []
        for path, nid, parent in level:
            if t <= T:
                k = stage_cands[t - 1].shape[1]
                kids = tuple(range(next_id, next_id + k))
                next_id += k
                pending.append(Node(nid, t, parent, kids, stage_cands[t - 1]))
                new_level.extend((path + (i,), kids[i], nid) for i in range(k))
            else:
                pending.append(Node(nid, t, parent, ()))
                try:
                    value = leaf_value_fn(path) if callable(leaf_value_fn) else leaf_value_fn[path]
                except (KeyError, IndexError):
                    raise PathTableIncompleteError(f"no leaf value for path {path}") from None
                leaf_values[nid] = float(value)
        level = new_level
    nodes.extend(pending)
    return ScenarioTree(T, nodes, leaf_values)


def nested_product(
    marginals: Sequence[FiniteDistribution],
    profile,
    leaf_value_fn: Mapping[tuple, float] | Callable[[tuple], float],
) -> float:
    """Nested risk under a product law without building a tree.

    Under rectangularity the conditional law at every stage-t history is the
    marginal P_t, so the recursion runs over atom-index prefixes directly.
    """
    profile = parse_profile(profile, len(marginals))
    T = len(marginals)

    def leaf(path):
        try:
            return leaf_value_fn(path) if callable(leaf_value_fn) else leaf_value_fn[path]
        except (KeyError, IndexError):
            raise PathTableIncompleteError(f"no leaf value for path {path}") from None

    def value(prefix: tuple) -> float:
        t = len(prefix)
        if t == T:
            return float(leaf(prefix))
        m = marginals[t]
        z = np.array([value(prefix + (i,)) for i in range(len(m))])
        return float(risk_values(profile[t], z, m.probs))

    return value(())

