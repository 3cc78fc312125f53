import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskdp.errors import (
    EmptySampleError,
    LengthMismatchError,
    MassNotOneError,
    NegativeProbabilityError,
    NonFiniteValueError,
)
from riskdp.measures import (
    FiniteDistribution,
    SampleBatch,
    cdf,
    dirac,
    empirical,
    make_distribution,
    pushforward,
    sample,
    uniform,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def distributions(draw, max_atoms=8):
    k = draw(st.integers(1, max_atoms))
    values = draw(st.lists(st.integers(-5, 5).map(float) | finite, min_size=k, max_size=k))
    weights = draw(st.lists(st.floats(0.01, 10), min_size=k, max_size=k))
    w = np.array(weights)
    return make_distribution(values, w / w.sum())


def test_merge_and_sort():
    d = make_distribution([3, 1, 1], [0.2, 0.5, 0.3])
    assert d.atoms.tolist() == [1, 3]
    assert d.probs == pytest.approx([0.8, 0.2], abs=1e-12)


def test_point_mass_and_two_point():
    assert make_distribution([5], [1.0]) == dirac(5)
    d = make_distribution([0, 10], [0.5, 0.5])
    assert d.atoms.tolist() == [0, 10] and d.probs.tolist() == [0.5, 0.5]


@pytest.mark.parametrize(
    "values, probs, err",
    [
        ([1, 2], [1.0], LengthMismatchError),
        ([], [], LengthMismatchError),
        ([1, 2], [1.5, -0.5], NegativeProbabilityError),
        ([1, 2], [0.5, 0.6], MassNotOneError),
        ([np.nan], [1.0], NonFiniteValueError),
        ([1.0], [np.inf], NonFiniteValueError),
    ],
)
def test_construction_errors(values, probs, err):
    with pytest.raises(err):
        make_distribution(values, probs)


def test_mass_tolerance_is_1e9():
    make_distribution([0, 1], [0.5, 0.5 + 5e-10])
    with pytest.raises(MassNotOneError):
        make_distribution([0, 1], [0.5, 0.5 + 5e-9])


def test_cdf_examples():
    assert cdf(uniform([1, 2, 3, 4]), 2.5) == 0.5
    assert cdf(dirac(5), 4.999) == 0 and cdf(dirac(5), 5) == 1
    assert cdf(make_distribution([0, 10], [0.9, 0.1]), 0) == pytest.approx(0.9)


def test_empirical_examples():
    d = empirical(SampleBatch([1, 1, 2]))
    assert d.atoms.tolist() == [1, 2] and d.probs == pytest.approx([2 / 3, 1 / 3])
    assert empirical([7]) == dirac(7)
    d = empirical([3, 1, 3, 1])
    assert d.atoms.tolist() == [1, 3] and d.probs.tolist() == [0.5, 0.5]


def test_empirical_and_batch_errors():
    with pytest.raises(EmptySampleError):
        empirical([])
    with pytest.raises(EmptySampleError):
        SampleBatch([])
    with pytest.raises(NonFiniteValueError):
        SampleBatch([1.0, np.inf])


def test_pushforward_examples():
    assert pushforward(uniform([1, 2]), [5, 5]) == dirac(5)
    d = pushforward(uniform([1, 2, 3]), [1, 1, 2])
    assert d.atoms.tolist() == [1, 2] and d.probs == pytest.approx([2 / 3, 1 / 3])
    assert pushforward(dirac(0), [9]) == dirac(9)
    with pytest.raises(LengthMismatchError):
        pushforward(uniform([1, 2]), [1])


def test_json_round_trip():
    d = make_distribution([0.5, -1, 2], [0.2, 0.3, 0.5])
    assert FiniteDistribution.from_dict(json.loads(json.dumps(d.to_dict()))) == d
    b = SampleBatch([1.5, 2.0], seed=2**64 - 1)
    assert SampleBatch.from_dict(json.loads(json.dumps(b.to_dict()))).to_dict() == b.to_dict()


def test_immutable():
    d = uniform([1, 2])
    with pytest.raises(ValueError):
        d.probs[0] = 1.0
    with pytest.raises(AttributeError):
        d.atoms = np.array([0.0])


@settings(max_examples=200, deadline=None)
@given(distributions())
def test_invariants(d):
    assert np.all(np.diff(d.atoms) > 0)
    assert np.all(d.probs >= 0)
    assert abs(d.probs.sum() - 1) <= 1e-12
    assert cdf(d, d.atoms[-1]) == 1.0
    assert make_distribution(d.atoms, d.probs) == d


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-4, 4).map(float), min_size=1, max_size=30), st.floats(-6, 6))
def test_empirical_cdf_counts(values, z):
    d = empirical(values)
    direct = sum(v <= z for v in values) / len(values)
    assert cdf(d, z) == pytest.approx(direct, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(distributions(), st.data())
def test_pushforward_mass_and_relabeling(d, data):
    mapping = data.draw(st.lists(st.integers(-3, 3).map(float), min_size=len(d), max_size=len(d)))
    img = pushforward(d, mapping)
    assert abs(img.probs.sum() - 1) <= 1e-12
    # relabel atoms by a permutation and move the map along with them
    perm = np.array(data.draw(st.permutations(range(len(d)))))
    shuffled = FiniteDistribution(d.atoms[perm], d.probs[perm])
    again = pushforward(shuffled, np.asarray(mapping)[perm])
    assert np.array_equal(again.atoms, img.atoms)
    assert np.allclose(again.probs, img.probs, atol=1e-12)


def test_sampling_frequencies_and_seed():
    d = make_distribution([0, 1, 2], [0.2, 0.5, 0.3])
    a = sample(d, np.random.default_rng(3), 200_000)
    b = sample(d, np.random.default_rng(3), 200_000)
    assert np.array_equal(a, b)
    freq = np.bincount(a.astype(int), minlength=3) / a.size
    assert freq == pytest.approx([0.2, 0.5, 0.3], abs=0.01)
