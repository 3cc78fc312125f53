"""Finite probability distributions over the real line."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptySampleError,
    LengthMismatchError,
    MassNotOneError,
    NegativeProbabilityError,
    NonFiniteValueError,
)

INPUT_MASS_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Atoms strictly increasing, probabilities summing to one.

    Build through :func:`make_distribution`; the constructor does not validate.
    """

    atoms: np.ndarray
    probs: np.ndarray

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteDistribution):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        pairs = ", ".join(f"{a:g}: {p:g}" for a, p in zip(self.atoms, self.probs))
        return f"FiniteDistribution({{{pairs}}})"

    def cdf(self, z: float) -> float:
        return cdf(self, z)

    def shift(self, c: float) -> "FiniteDistribution":
        return make_distribution(self.atoms + c, self.probs)

    def scale(self, c: float) -> "FiniteDistribution":
        return make_distribution(self.atoms * c, self.probs)

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteDistribution":
        return make_distribution(d["atoms"], d["probs"])


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise EmptySampleError("sample batch is empty")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("sample batch contains NaN or infinite values")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleBatch":
        return cls(d["values"], d.get("seed", 0))


def make_distribution(values: Sequence[float], probs: Sequence[float]) -> FiniteDistribution:
    """Sort atoms, merge duplicates and renormalize.

    Raises on mismatched lengths, negative or non-finite entries, and total
    mass off by more than 1e-9.
    """
    values = np.asarray(values, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    if values.size != probs.size or values.size == 0:
        raise LengthMismatchError(
            f"need equal nonzero lengths, got {values.size} values and {probs.size} probs"
        )
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(probs))):
        raise NonFiniteValueError("values and probs must be finite")
    if np.any(probs < 0):
        raise NegativeProbabilityError(f"negative probability {probs.min()!r}")
    total = probs.sum()
    if abs(total - 1.0) > INPUT_MASS_TOL:
        raise MassNotOneError(f"probabilities sum to {total!r}")
    atoms, inverse = np.unique(values, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=probs, minlength=atoms.size)
    # leave already-normalized input alone so rebuilding is idempotent
    mass = merged.sum()
    if abs(mass - 1.0) > 1e-12:
        merged = merged / mass
    return FiniteDistribution(_frozen(atoms), _frozen(merged))


def dirac(value: float) -> FiniteDistribution:
    return make_distribution([value], [1.0])


def uniform(values: Sequence[float]) -> FiniteDistribution:
    n = len(values)
    return make_distribution(values, np.full(n, 1.0 / n))


def cdf(dist: FiniteDistribution, z: float) -> float:
    """P(Z <= z); right-continuous, exactly 1 at or above the largest atom."""
    k = int(np.searchsorted(dist.atoms, z, side="right"))
    if k == 0:
        return 0.0
    if k == len(dist.atoms):
        return 1.0
    return float(np.sum(dist.probs[:k]))


def cdf_levels(dist: FiniteDistribution) -> np.ndarray:
    """Cumulative sums F(atom_i), with the last level pinned to 1."""
    levels = np.cumsum(dist.probs)
    levels[-1] = 1.0
    return levels


def empirical(samples: SampleBatch | Sequence[float]) -> FiniteDistribution:
    """The empirical measure N^-1 sum delta_{Z_i}."""
    values = samples.values if isinstance(samples, SampleBatch) else np.asarray(samples, float)
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise EmptySampleError("cannot form an empirical measure from no samples")
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("samples must be finite")
    atoms, counts = np.unique(values, return_counts=True)
    return FiniteDistribution(_frozen(atoms), _frozen(counts / values.size))


def pushforward(dist: FiniteDistribution, mapping: Sequence[float]) -> FiniteDistribution:
    """Law of ``mapping[i]`` when atom ``i`` is drawn from ``dist``."""
    mapping = np.asarray(mapping, dtype=float).ravel()
    if mapping.size != len(dist):
        raise LengthMismatchError(f"map has {mapping.size} entries for {len(dist)} atoms")
    return make_distribution(mapping, dist.probs)


def sample(dist: FiniteDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` iid atoms by inverse transform on the cdf levels."""
    u = rng.random(n)
    idx = np.searchsorted(cdf_levels(dist), u, side="right")
    return dist.atoms[np.minimum(idx, len(dist) - 1)]
