import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from models import RISKS, random_tree
from riskdp.errors import (
    AmbiguousCandidatesError,
    ChildValueMissingError,
    InvalidTreeError,
    LeafNodeError,
    MemberOutOfRangeError,
    PathTableIncompleteError,
)
from riskdp.measures import make_distribution, uniform
from riskdp.nested import (
    Node,
    ScenarioTree,
    build_product_tree,
    conditional_risk_at_node,
    nested_evaluate,
    nested_product,
    nested_values,
    robust_nested_evaluate,
)
from riskdp.risk import RiskSpec, evaluate

E = RiskSpec("expectation")


def one_stage(values, candidates):
    kids = tuple(range(1, len(values) + 1))
    nodes = [Node(0, 1, None, kids, np.array(candidates, dtype=float))]
    nodes += [Node(k, 2, 0, ()) for k in kids]
    return ScenarioTree(1, nodes, dict(zip(kids, values)))


def test_conditional_risk_examples():
    tree = one_stage([0, 10], [[0.5, 0.5]])
    assert conditional_risk_at_node(tree, 0, E) == 5
    assert conditional_risk_at_node(tree, 0, RiskSpec("var", alpha=0.4)) == 10
    single = one_stage([3.5], [[1.0]])
    for r in RISKS:
        assert conditional_risk_at_node(single, 0, r) == pytest.approx(3.5)


def test_conditional_risk_errors():
    tree = one_stage([0, 10], [[0.5, 0.5]])
    with pytest.raises(LeafNodeError):
        conditional_risk_at_node(tree, 1, E)
    with pytest.raises(MemberOutOfRangeError):
        conditional_risk_at_node(tree, 0, E, member=1)
    two = build_product_tree([uniform([-1, 1])] * 2, lambda p: sum(p))
    with pytest.raises(ChildValueMissingError):
        conditional_risk_at_node(two, 0, E)
    assert conditional_risk_at_node(two, 0, E, values={1: 2.0, 2: 4.0}) == 3.0


def test_nested_examples():
    tree = build_product_tree([uniform([0, 1])] * 2, {(0, 0): 1, (0, 1): 2, (1, 0): 3, (1, 1): 4})
    assert nested_evaluate(tree, "expectation") == 2.5
    flat = tree.with_leaf_values({k: 7.25 for k in tree.leaves})
    for r in RISKS:
        assert nested_evaluate(flat, [r, r]) == pytest.approx(7.25, abs=1e-12)
    law = make_distribution([0, 1, 2], [0.2, 0.5, 0.3])
    depth1 = build_product_tree([law], lambda p: [4.0, -1.0, 2.5][p[0]])
    for r in RISKS:
        assert nested_evaluate(depth1, [r]) == evaluate(r, make_distribution([4.0, -1.0, 2.5], law.probs))


def test_ambiguous_candidates():
    tree = one_stage([0, 10], [[0.9, 0.1], [0.5, 0.5]])
    with pytest.raises(AmbiguousCandidatesError):
        nested_evaluate(tree, "expectation")
    assert robust_nested_evaluate(tree, "expectation") == pytest.approx(5.0)
    assert nested_values(tree, "expectation").selection == {0: 1}


def test_product_tree_examples():
    pm = uniform([-1, 1])
    t1 = build_product_tree([pm], lambda p: pm.atoms[p[0]])
    assert len(t1.leaves) == 2
    t2 = build_product_tree([pm, pm], lambda p: pm.atoms[p[0]] + pm.atoms[p[1]])
    assert len(t2.leaves) == 4 and nested_evaluate(t2, "expectation") == 0
    t3 = build_product_tree([pm] * 3, lambda p: float(sum(p)))
    assert len(t3.leaves) == 8
    laws = {tuple(t3.node(n).candidates[0]) for n in t3.by_stage[2]}
    assert laws == {(0.5, 0.5)}
    with pytest.raises(PathTableIncompleteError):
        build_product_tree([pm, pm], {(0, 0): 1.0})


def test_var_nested_value():
    pm = uniform([-1, 1])
    t2 = build_product_tree([pm, pm], lambda p: pm.atoms[p[0]] + pm.atoms[p[1]])
    prof = [RiskSpec("var", alpha=0.4)] * 2
    assert nested_evaluate(t2, prof) == 2.0
    assert nested_product([pm, pm], prof, lambda p: pm.atoms[p[0]] + pm.atoms[p[1]]) == 2.0


def test_tree_validation():
    with pytest.raises(InvalidTreeError):
        ScenarioTree(1, [Node(0, 1, None, (1,), np.array([[1.0]]))], {})
    with pytest.raises(InvalidTreeError):
        one_stage([0, 1], [[0.7, 0.7]])
    with pytest.raises(InvalidTreeError):
        ScenarioTree(2, [Node(0, 1, None, (1,), np.array([[1.0]])), Node(1, 2, 0, ())], {1: 0.0})


def test_json_round_trip_and_off_support():
    tree = one_stage([0, 10, 3], [[0.5, 0.5, 0.0]])
    again = ScenarioTree.from_dict(json.loads(json.dumps(tree.to_dict())))
    assert again.to_dict() == tree.to_dict()
    res = nested_values(again, "expectation")
    assert res.off_support == [3]
    assert json.loads(json.dumps(res.to_dict()))["value"] == 5.0


def test_path_enumeration_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        tree = random_tree(rng)
        assert nested_evaluate(tree, "expectation") == pytest.approx(
            oracles.tree_path_expectation(tree.to_dict()), abs=1e-9
        )


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.sampled_from(RISKS))
def test_translation_and_monotonicity(seed, c, risk):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, max_stages=4, max_nodes=80, members=2)
    prof = [risk] * tree.stages
    base = robust_nested_evaluate(tree, prof)
    shifted = tree.with_leaf_values({k: v + c for k, v in tree.leaf_values.items()})
    assert robust_nested_evaluate(shifted, prof) == pytest.approx(base + c, abs=1e-9)
    bump = dict(tree.leaf_values)
    leaf = tree.leaves[int(rng.integers(len(tree.leaves)))]
    bump[leaf] += abs(c)
    assert robust_nested_evaluate(tree.with_leaf_values(bump), prof) >= base - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(RISKS))
def test_product_reduction(seed, risk):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 4))
    margs = [make_distribution(np.arange(k, dtype=float), rng.dirichlet(np.ones(k))) for k in rng.integers(1, 4, T)]
    table = {p: float(rng.normal()) for p in itertools.product(*[range(len(m)) for m in margs])}
    prof = [risk] * T
    assert nested_evaluate(build_product_tree(margs, table), prof) == pytest.approx(
        nested_product(margs, prof, table), abs=1e-9
    )


def test_robust_equals_max_over_selections():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 40:
        tree = random_tree(rng, max_stages=3, max_branch=3, max_nodes=12, members=2)
        ids = tree.non_leaves()
        if 2 ** len(ids) > 64:
            continue
        for risk in RISKS:
            prof = [risk] * tree.stages
            fixed = [
                nested_evaluate(tree.with_candidates(dict(zip(ids, sel))), prof)
                for sel in itertools.product(range(2), repeat=len(ids))
            ]
            assert robust_nested_evaluate(tree, prof) == pytest.approx(max(fixed), abs=1e-12)
        checked += 1
