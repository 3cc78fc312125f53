import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from models import RISKS, random_soc
from riskdp.errors import InvalidMatrixError, MatrixTooLargeError
from riskdp.risk import RiskSpec
from riskdp.saddle import ENTROPIC_WARNING, analyze, build_psi, is_saddle, randomized_value
from riskdp.soc import SocModel, soc_bellman


def test_pure_saddle_example():
    rep = analyze([[1, 2], [3, 4]])
    assert (rep.primal, rep.dual, rep.randomized, rep.gap) == (2.0, 2.0, 2.0, 0.0)
    assert rep.saddle == (0, 1) and rep.mix.tolist() == [1.0, 0.0] and rep.exact


def test_matching_pennies(fixtures_dir):
    psi = json.loads((fixtures_dir / "matching_pennies.json").read_text())["psi"]
    rep = analyze(psi)
    assert (rep.primal, rep.dual) == (1.0, 0.0)
    assert rep.randomized == pytest.approx(0.5, abs=1e-12)
    assert rep.mix == pytest.approx([0.5, 0.5], abs=1e-12)
    assert rep.saddle is None


def test_chain_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n, m = rng.integers(1, 7, size=2)
        psi = rng.normal(size=(n, m)) if rng.random() < 0.5 else rng.integers(-3, 4, size=(n, m)).astype(float)
        rep = analyze(psi)
        assert rep.dual <= rep.randomized + 1e-9 <= rep.primal + 2e-9
        assert (rep.saddle is not None) == (rep.gap <= 1e-9)
        assert float((rep.mix @ psi).max()) <= rep.randomized + 1e-9


def test_mixed_value_matches_support_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n, m = rng.integers(1, 5, size=2)
        psi = rng.normal(size=(n, m))
        assert randomized_value(psi)[0] == pytest.approx(oracles.game_value_support_enum(psi), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.integers(-5, 5).map(float)))
def test_reported_saddle_satisfies_both_inequalities(psi):
    rep = analyze(psi)
    if rep.saddle is not None:
        assert is_saddle(psi, *rep.saddle, 1e-9)
    assert rep.primal >= rep.dual


def test_single_column_has_no_gap():
    rng = np.random.default_rng(2)
    for _ in range(50):
        psi = rng.normal(size=(int(rng.integers(1, 8)), 1))
        rep = analyze(psi)
        assert rep.gap == 0 and rep.saddle is not None and rep.randomized == rep.primal


def test_validation():
    with pytest.raises(MatrixTooLargeError):
        analyze(np.zeros((17, 2)) + np.eye(17, 2))
    for bad in ([], [[1, np.nan]], "abc", [[1, 2], [3]]):
        with pytest.raises(InvalidMatrixError):
            analyze(bad)
    with pytest.raises(InvalidMatrixError):
        analyze([[1.0]], tol=-1)


def test_entropic_warning_only_for_entropic():
    psi = [[1, 0], [0, 1]]
    assert analyze(psi, risk=RiskSpec("entropic", tau=1.0)).warning == ENTROPIC_WARNING
    assert analyze(psi, risk=RiskSpec("avar", alpha=0.5)).warning is None


def test_psi_rows_reproduce_bellman_backup():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = random_soc(rng, S=3, A=3, K=3, M=3, discount=0.7)
        g = rng.normal(size=3)
        for r in RISKS:
            T = soc_bellman(m, r, g)
            for x in range(3):
                assert build_psi(m, x, g, r).max(axis=1).min() == pytest.approx(T[x], abs=1e-12)


def test_psi_by_hand():
    # one state, two controls, two noise atoms; candidate laws are the two Diracs
    m = SocModel([[[[0, 0], [0, 0]]]], [[[[1.0, 3.0], [2.0, 2.0]]]], [[[1.0, 0.0], [0.0, 1.0]]], None, 0.5)
    psi = build_psi(m, 0, [4.0], RiskSpec("expectation"))
    assert psi.tolist() == [[3.0, 5.0], [4.0, 4.0]]
    rep = analyze(psi)
    assert rep.primal == 4.0 and rep.dual == 4.0 and rep.saddle == (1, 1)
