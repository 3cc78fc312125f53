"""Empirical Value-at-Risk, sample-size bounds and Monte Carlo coverage checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    AlphaOutOfRangeError,
    BetaLRegimeError,
    DeltaOutOfRangeError,
    EmptySampleError,
    EpsOutOfRangeError,
    GrowthViolatedError,
    KappaNotPositiveError,
    NonpositiveLogArgumentError,
    ParameterRangeError,
)
from .measures import FiniteDistribution, SampleBatch, cdf_levels, empirical
from .measures import sample as sample_finite
from .risk import CDF_TOL, var, var_values

# ---------------------------------------------------------------------------
# samplers


@dataclass(frozen=True, eq=False)
class PiecewiseLinearCdf:
    """Continuous law whose cdf interpolates linearly between breakpoints.

    The density on each segment is its slope, so the growth constant over a
    window is read off exactly rather than estimated.
    """

    breakpoints: np.ndarray
    cdf_values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        F = np.asarray(self.cdf_values, dtype=float)
        if b.ndim != 1 or b.shape != F.shape or b.size < 2:
            raise ParameterRangeError("need matching breakpoint and cdf arrays of length >= 2")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(F))):
            raise ParameterRangeError("breakpoints and cdf values must be finite")
        if np.any(np.diff(b) <= 0):
            raise ParameterRangeError("breakpoints must be strictly increasing")
        if np.any(np.diff(F) < 0) or F[0] != 0.0 or F[-1] != 1.0:
            raise ParameterRangeError("cdf values must rise from 0 to 1")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "cdf_values", F)

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "PiecewiseLinearCdf":
        return cls([lo, hi], [0.0, 1.0])

    def cdf(self, z):
        return np.interp(z, self.breakpoints, self.cdf_values, left=0.0, right=1.0)

    def quantile(self, u):
        """Left quantile inf{z : F(z) >= u}."""
        u = np.asarray(u, dtype=float)
        b, F = self.breakpoints, self.cdf_values
        i = np.clip(np.searchsorted(F, u, side="left"), 1, len(F) - 1)
        lo, hi = F[i - 1], F[i]
        frac = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
        z = b[i - 1] + np.clip(frac, 0.0, 1.0) * (b[i] - b[i - 1])
        return np.where(u <= 0, b[0], z)

    def var(self, alpha: float) -> float:
        return float(self.quantile(1.0 - alpha))

    def min_slope(self, lo: float, hi: float) -> float:
        """Smallest density on [lo, hi]; zero if the window leaves the support."""
        b, F = self.breakpoints, self.cdf_values
        if lo < b[0] or hi > b[-1]:
            return 0.0
        slopes = np.diff(F) / np.diff(b)
        overlap = (b[1:] > lo) & (b[:-1] < hi)
        if not np.any(overlap):
            j = int(np.clip(np.searchsorted(b, lo, side="right") - 1, 0, len(slopes) - 1))
            return float(slopes[j])
        return float(slopes[overlap].min())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.quantile(rng.random(n))

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "cdf": self.cdf_values.tolist()}


Sampler = Union[FiniteDistribution, PiecewiseLinearCdf]


def draw(sampler: Sampler, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(sampler, PiecewiseLinearCdf):
        return sampler.sample(rng, n)
    return sample_finite(sampler, rng, n)


def sampler_from_dict(d: dict) -> Sampler:
    if "breakpoints" in d:
        return PiecewiseLinearCdf(d["breakpoints"], d["cdf"])
    return FiniteDistribution.from_dict(d)


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep``, a pure function of (seed, rep)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))


# ---------------------------------------------------------------------------
# estimators and constants


def _alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise AlphaOutOfRangeError(f"alpha={alpha!r} not in (0,1)")
    return alpha


def _order_statistic_index(n: int, alpha: float) -> int:
    # smallest k with k/n >= 1 - alpha - CDF_TOL, the empirical left quantile
    level = 1.0 - alpha - CDF_TOL
    k = max(1, math.ceil(n * level))
    while k > 1 and (k - 1) / n >= level:
        k -= 1
    while k < n and k / n < level:
        k += 1
    return min(k, n)


def empirical_var(samples: SampleBatch | Sequence[float], alpha: float) -> float:
    """Empirical VaR, computed from the empirical cdf and as an order statistic."""
    alpha = _alpha(alpha)
    values = samples.values if isinstance(samples, SampleBatch) else np.asarray(samples, float).ravel()
    if len(values) == 0:
        raise EmptySampleError("no samples")
    via_cdf = var(empirical(values), alpha)
    k = _order_statistic_index(len(values), alpha)
    via_order = float(np.partition(values, k - 1)[k - 1])
    if via_cdf != via_order:
        raise AssertionError(f"empirical VaR mismatch: cdf scan {via_cdf!r} vs order statistic {via_order!r}")
    return via_cdf


def empirical_var_batch(values: np.ndarray, alpha: float) -> np.ndarray:
    """Empirical VaR along the last axis (order-statistic route)."""
    values = np.asarray(values, dtype=float)
    k = _order_statistic_index(values.shape[-1], alpha)
    return np.partition(values, k - 1, axis=-1)[..., k - 1]


def kappa(dist: FiniteDistribution, alpha: float) -> float:
    """Slack between 1-alpha and the cdf levels on either side of the quantile.

    Zero when 1-alpha coincides with an attainable cdf level, in which case
    the empirical quantile need not converge.
    """
    alpha = _alpha(alpha)
    nu = var(dist, alpha)
    levels = cdf_levels(dist)
    i = int(np.searchsorted(dist.atoms, nu))
    left = levels[i - 1] if i > 0 else 0.0
    right = levels[i]
    target = 1.0 - alpha
    k = min(target - left, right - target)
    return 0.0 if k <= CDF_TOL else float(k)


def _ceil(x: float) -> int:
    # absorb float noise in formulas that are integers in exact arithmetic
    return max(1, math.ceil(x - 1e-9 * max(1.0, abs(x))))


def _delta(delta: float) -> float:
    delta = float(delta)
    if not 0 < delta < 1:
        raise DeltaOutOfRangeError(f"delta={delta!r} not in (0,1)")
    return delta


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ParameterRangeError(f"{name}={value!r} must be positive")
    return value


def n_exact(kappa: float, delta: float) -> int:
    """Samples after which the empirical VaR equals the true one w.p. >= 1-delta."""
    if not kappa > 0:
        raise KappaNotPositiveError(f"kappa={kappa!r} must be positive")
    delta = _delta(delta)
    return _ceil(0.5 * kappa**-2 * math.log(2 / delta))


def n_growth(c: float, eps: float, delta: float) -> int:
    """Samples for |VaR_N - VaR| < eps w.p. >= 1-delta under a density floor c."""
    c, eps = _positive("c", c), _positive("eps", eps)
    delta = _delta(delta)
    return _ceil(0.5 * c**-2 * eps**-2 * math.log(2 / delta))


def n_uniform(n: int, L: float, D: float, c: float, eps: float, delta: float) -> int:
    """Samples for a uniform eps-deviation over an n-dimensional compact decision set."""
    if int(n) < 1:
        raise ParameterRangeError(f"dimension n={n!r} must be >= 1")
    L, c, eps = _positive("L", L), _positive("c", c), _positive("eps", eps)
    D = float(D)
    delta = _delta(delta)
    arg = 4 * L * D / eps
    if arg <= 1:
        raise NonpositiveLogArgumentError(f"4LD/eps = {arg!r} must exceed 1")
    return _ceil(2 * c**-2 * eps**-2 * (int(n) * math.log(arg) + math.log(1 / delta)))


def n_soc(n: int, m: int, L: float, D: float, beta: float, kappa_alpha: float, eps: float, delta: float) -> int:
    """Samples for ||V - V_N|| <= eps with VaR risk and finitely supported noise.

    Only the regime beta*L > 1 is supported.
    """
    if int(n) < 1 or int(m) < 1:
        raise ParameterRangeError("state and control dimensions must be >= 1")
    L, D, eps = _positive("L", L), _positive("D", D), _positive("eps", eps)
    beta = float(beta)
    if not 0 < beta < 1:
        raise ParameterRangeError(f"beta={beta!r} not in (0,1)")
    if not kappa_alpha > 0:
        raise KappaNotPositiveError(f"kappa_alpha={kappa_alpha!r} must be positive")
    delta = _delta(delta)
    if beta * L <= 1:
        raise BetaLRegimeError(f"beta*L = {beta * L!r} must exceed 1")
    d = int(n) + int(m)
    gap = 1 - beta
    bracket = (
        d * math.log(8 * D * L**2 / (eps * gap * (beta * L - 1)))
        + (d / gap) * math.log(beta * L) * math.log(4 / (eps * gap))
        + math.log(2 / delta)
    )
    return _ceil(0.5 * kappa_alpha**-2 * bracket)


def lipschitz_tilde_constants(L_R: float, L: float, beta: float, eps: float) -> tuple[int, float]:
    """Iteration count k and Lipschitz constant of the k-th value iterate from zero."""
    eps = float(eps)
    if not 0 < eps <= 1:
        raise EpsOutOfRangeError(f"eps={eps!r} not in (0,1]")
    L_R, L = _positive("L_R", L_R), _positive("L", L)
    beta = float(beta)
    if not 0 < beta < 1:
        raise ParameterRangeError(f"beta={beta!r} not in (0,1)")
    k = math.ceil(math.log(1 / eps) / (1 - beta) - 1e-12) if eps < 1 else 0
    rho = beta * L_R * L
    if math.isclose(rho, 1.0, rel_tol=1e-12):
        return k, k * L_R * L
    return k, L_R * L * (rho**k - 1) / (rho - 1)


def dkw_bound(n: int, eps: float) -> float:
    """Upper bound on P(sup_z |F_N(z) - F(z)| > eps)."""
    return min(1.0, 2 * math.exp(-2 * n * eps**2))


def sup_cdf_deviation(samples: np.ndarray, cdf: Callable) -> float:
    """Kolmogorov statistic sup_z |F_N(z) - F(z)| against a continuous cdf."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def coverage_floor(delta: float, reps: int) -> float:
    """(1-delta) minus three Monte Carlo standard errors."""
    return (1 - delta) - 3 * math.sqrt(delta * (1 - delta) / reps)


# ---------------------------------------------------------------------------
# Monte Carlo experiments


@dataclass
class CoverageReport:
    n_used: int
    reps: int
    coverage: float
    max_deviation: float
    seed: int
    extra: dict = field(default_factory=dict)
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {
            "n_used": self.n_used,
            "reps": self.reps,
            "coverage": self.coverage,
            "max_deviation": self.max_deviation,
            "seed": self.seed,
        }
        d.update(self.extra)
        return d


def _check_reps(reps: int) -> int:
    reps = int(reps)
    if reps < 1:
        raise ParameterRangeError("reps must be >= 1")
    return reps


def mc_exact_experiment(
    dist: FiniteDistribution,
    alpha: float,
    delta: float,
    reps: int = 2000,
    seed: int = 0,
    n: int | None = None,
) -> CoverageReport:
    """Frequency with which the empirical VaR equals the true VaR exactly."""
    alpha = _alpha(alpha)
    k = kappa(dist, alpha)
    if k <= 0:
        raise KappaNotPositiveError(f"kappa = 0 at alpha={alpha!r}: 1-alpha is an attained cdf level", level=1 - alpha)
    reps = _check_reps(reps)
    n_used = n_exact(k, delta) if n is None else int(n)
    truth = var(dist, alpha)
    hits, worst, rows = 0, 0.0, []
    for r in range(reps):
        est = float(empirical_var_batch(sample_finite(dist, replication_rng(seed, r), n_used), alpha))
        dev = abs(est - truth)
        hits += est == truth
        worst = max(worst, dev)
        rows.append({"rep": r, "estimate": est, "deviation": dev, "hit": int(est == truth)})
    return CoverageReport(
        n_used, reps, hits / reps, worst, seed,
        extra={"kind": "exact", "kappa": k, "alpha": alpha, "delta": delta, "true_var": truth},
        rows=rows,
    )


def _growth_window(sampler: PiecewiseLinearCdf, alpha: float, c: float | None, b: float | None):
    nu = sampler.var(alpha)
    if b is None:
        b = min(nu - sampler.breakpoints[0], sampler.breakpoints[-1] - nu)
    b = float(b)
    if not b > 0:
        raise GrowthViolatedError(f"no growth window around VaR={nu!r}")
    slope = sampler.min_slope(nu - b, nu + b)
    if c is None:
        c = slope
    c = float(c)
    if not c > 0 or slope < c * (1 - 1e-12):
        raise GrowthViolatedError(f"cdf slope {slope!r} below c={c!r} on [{nu - b!r}, {nu + b!r}]")
    return nu, c, b


def mc_growth_experiment(
    sampler: PiecewiseLinearCdf,
    alpha: float,
    eps: float,
    delta: float,
    reps: int = 1000,
    seed: int = 0,
    c: float | None = None,
    b: float | None = None,
    n: int | None = None,
) -> CoverageReport:
    """Frequency of |VaR_N - VaR| < eps at the growth-condition sample size.

    ``c`` and ``b`` default to the widest window inside the support and the
    smallest density on it.
    """
    alpha = _alpha(alpha)
    reps = _check_reps(reps)
    nu, c, b = _growth_window(sampler, alpha, c, b)
    n_used = n_growth(c, eps, delta) if n is None else int(n)
    hits, worst, rows = 0, 0.0, []
    for r in range(reps):
        est = float(empirical_var_batch(sampler.sample(replication_rng(seed, r), n_used), alpha))
        dev = abs(est - nu)
        hits += dev < eps
        worst = max(worst, dev)
        rows.append({"rep": r, "estimate": est, "deviation": dev, "hit": int(dev < eps)})
    return CoverageReport(
        n_used, reps, hits / reps, worst, seed,
        extra={
            "kind": "growth", "alpha": alpha, "eps": eps, "delta": delta, "c": c, "b": b,
            "true_var": nu, "eps_within_window": bool(eps < b),
        },
        rows=rows,
    )


def shift_family(grid: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """psi(x, xi) = x + xi for scalar decisions."""
    return np.asarray(grid, float)[:, None] + np.asarray(xi, float)[None, :]


FAMILIES = {"shift": shift_family}


def _diameter(grid: np.ndarray) -> float:
    pts = grid.reshape(len(grid), -1)
    diffs = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diffs**2).sum(-1)).max())


def mc_uniform_experiment(
    family: Callable[[np.ndarray, np.ndarray], np.ndarray] | str,
    grid: Sequence,
    sampler: PiecewiseLinearCdf,
    alpha: float,
    eps: float,
    delta: float,
    L: float,
    reps: int = 500,
    seed: int = 0,
    c: float | None = None,
    b: float | None = None,
    true_var: Sequence[float] | None = None,
    n: int | None = None,
) -> CoverageReport:
    """Uniform deviation and eps-optimal-set coverage over a finite decision grid.

    ``family(grid, xi)`` returns the (G, N) outcome matrix. ``true_var`` gives
    VaR_alpha(psi(x, xi)) per grid point; when omitted, psi is taken to be
    nondecreasing in xi and the quantile of xi is pushed through it. ``c`` and
    ``b`` describe a growth window valid for every grid point; defaults come
    from the noise law, which is exact for shift families.

    Reports the sup-deviation coverage as ``coverage``, the frequency of
    argmin_N being contained in the eps-optimal set as ``optimal_set_coverage``,
    and the mean per-point coverage for comparison.
    """
    if isinstance(family, str):
        family = FAMILIES[family]
    alpha = _alpha(alpha)
    reps = _check_reps(reps)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterRangeError("decision grid is empty")
    dim = 1 if grid.ndim == 1 else grid.shape[1]
    _, c, b = _growth_window(sampler, alpha, c, b)
    if true_var is None:
        truth = family(grid, np.array([sampler.var(alpha)]))[:, 0]
    else:
        truth = np.asarray(true_var, dtype=float)
    D = _diameter(grid)
    n_used = n_uniform(dim, L, D, c, eps, delta) if n is None else int(n)
    eps_optimal = truth <= truth.min() + eps
    sup_hits = set_hits = 0
    point_hits = np.zeros(len(grid))
    worst, rows = 0.0, []
    for r in range(reps):
        xi = draw(sampler, replication_rng(seed, r), n_used)
        est = empirical_var_batch(family(grid, xi), alpha)
        dev = np.abs(est - truth)
        sup_dev = float(dev.max())
        argmin_n = est <= est.min() + 1e-12
        inside = bool(np.all(eps_optimal[argmin_n]))
        sup_hits += sup_dev <= eps
        set_hits += inside
        point_hits += dev <= eps
        worst = max(worst, sup_dev)
        rows.append({"rep": r, "sup_deviation": sup_dev, "hit": int(sup_dev <= eps), "optimal_set_hit": int(inside)})
    return CoverageReport(
        n_used, reps, sup_hits / reps, worst, seed,
        extra={
            "kind": "uniform", "alpha": alpha, "eps": eps, "delta": delta, "c": c, "b": b,
            "L": L, "D": D, "dim": dim, "grid_size": len(grid),
            "optimal_set_coverage": set_hits / reps,
            "pointwise_coverage": float(point_hits.mean() / reps),
        },
        rows=rows,
    )
