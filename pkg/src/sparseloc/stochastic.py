"""Monte Carlo and exact-enumeration checks of the free-annulus lemmas.

The quantities here are desk-scale versions of the probabilistic inputs
to the localization arguments: the probability that an annulus is
eps-free, the per-scale failure probability a_n that no free sub-annulus
exists, its closed-form upper bound, and the summability diagnostics
feeding the Borel-Cantelli conclusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import _rng
from .certify import free_intervals
from .geometry import RegionSet
from .models import RandomPotentialModel

__all__ = [
    "EstimateRecord",
    "ANSeriesRow",
    "ANSeriesReport",
    "BudgetExceededError",
    "ENUMERATION_SITE_BUDGET",
    "estimate_free_probability",
    "estimate_a_n",
    "brute_force_a_n",
    "a_n_bound",
    "quasi1d_threshold",
    "borel_cantelli_report",
]

ENUMERATION_SITE_BUDGET = 24
_TRIAL_BATCH = 256


class BudgetExceededError(RuntimeError):
    """Exact enumeration would exceed the 2^24-pattern budget."""


@dataclass(frozen=True)
class EstimateRecord:
    """Monte Carlo estimate with its binomial standard error."""

    value: float
    trials: int
    std_error: float
    seed: int
    exact: float | None = None

    def within(self, target: float, n_sigma: float = 3.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.std_error


def _binomial_record(hits: int, trials: int, seed: int, exact: float | None) -> EstimateRecord:
    p = hits / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    return EstimateRecord(p, trials, se, seed, exact)


def estimate_free_probability(
    model: RandomPotentialModel,
    annulus: RegionSet,
    eps: float,
    trials: int,
    seed: int,
) -> EstimateRecord:
    """Frequency of the eps-free event over independent coupling draws.

    Also returns the exact value prod_i (1 - p_i(eps)) over the sites in
    the annulus (couplings are independent).
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    indices = model.sites.indices_in(annulus)
    p_eps = model.tail_masses(indices, eps)
    exact = float(np.prod(1.0 - p_eps))
    if indices.size == 0:
        return EstimateRecord(1.0, trials, 0.0, seed, 1.0)
    points = model.sites.points[indices]
    hits = 0
    for _offset, block in _rng.site_uniform_batches(seed, indices, trials, _TRIAL_BATCH):
        values = model.laws.transform(points, indices, block)
        hits += int(np.count_nonzero(np.all(values <= eps, axis=0)))
    return _binomial_record(hits, trials, seed, exact)


def _relevant_site_indices(model: RandomPotentialModel, a: float, n: int) -> np.ndarray:
    """Sites whose badness can block some candidate annulus at scale n."""
    norms = model.sites.norms
    lo, hi = a**n, max(a ** (n + 1), a**n + n)
    return np.where((norms >= lo) & (norms <= hi))[0]


def _scan_blocked(bad_norms: np.ndarray, lo: float, hi: float, width: float) -> bool:
    """True when no free inner radius exists in [lo, hi]."""
    return not free_intervals(bad_norms, lo, hi, width)


def estimate_a_n(
    model: RandomPotentialModel,
    eps: float,
    a: float,
    n: int,
    trials: int,
    seed: int,
) -> EstimateRecord:
    """Monte Carlo frequency of 'no eps-free annulus of width n at scale n'.

    Degenerate scales (candidate range empty) are defined as a_n = 0 and
    returned without sampling, with zero standard error.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if a <= 1.0:
        raise ValueError("a must be > 1")
    window_needed = max(a ** (n + 1), a**n + n)
    if model.sites.window_radius + 1e-9 < window_needed:
        raise ValueError(
            f"site window {model.sites.window_radius:.3f} does not cover radius "
            f"{window_needed:.3f} needed at scale n={n}"
        )
    lo, hi = a**n, a ** (n + 1) - n
    if hi < lo:
        return EstimateRecord(0.0, trials, 0.0, seed, 0.0)
    indices = _relevant_site_indices(model, a, n)
    if indices.size == 0:
        return EstimateRecord(0.0, trials, 0.0, seed, 0.0)
    points = model.sites.points[indices]
    norms = model.sites.norms[indices]
    hits = 0
    for _offset, block in _rng.site_uniform_batches(seed, indices, trials, _TRIAL_BATCH):
        values = model.laws.transform(points, indices, block)
        bad = values > eps
        for t in range(block.shape[1]):
            if _scan_blocked(norms[bad[:, t]], lo, hi, float(n)):
                hits += 1
    return _binomial_record(hits, trials, seed, None)


def brute_force_a_n(
    model: RandomPotentialModel, eps: float, a: float, n: int
) -> float:
    """Exact a_n by enumerating the bad/good pattern of every relevant site.

    The blocked event depends on couplings only through the indicators
    {omega_i > eps}, so each site is a two-state variable with weights
    (1 - p_i(eps), p_i(eps)).  Sites with p on {0, 1} are resolved up
    front; the 2^m budget applies to the undecided remainder.
    """
    if a <= 1.0:
        raise ValueError("a must be > 1")
    lo, hi = a**n, a ** (n + 1) - n
    if hi < lo:
        return 0.0
    indices = _relevant_site_indices(model, a, n)
    norms = model.sites.norms[indices]
    p = model.tail_masses(indices, eps)
    always_bad = norms[p >= 1.0]
    undecided = p < 1.0
    undecided &= p > 0.0
    norms_u = norms[undecided]
    p_u = p[undecided]
    m = norms_u.size
    if m > ENUMERATION_SITE_BUDGET:
        raise BudgetExceededError(
            f"{m} undecided sites exceed the enumeration budget of "
            f"{ENUMERATION_SITE_BUDGET}"
        )
    if m == 0:
        return 1.0 if _scan_blocked(always_bad, lo, hi, float(n)) else 0.0
    patterns = np.arange(2**m, dtype=np.uint32)
    weights = np.ones(2**m)
    for j in range(m):
        bit = (patterns >> j) & 1
        weights *= np.where(bit == 1, p_u[j], 1.0 - p_u[j])
    total = 0.0
    # order sites by norm so per-pattern coverage can be swept in one pass
    order = np.argsort(norms_u, kind="stable")
    norms_sorted = norms_u[order]
    bits_sorted = order
    blocked = _coverage_sweep(
        patterns, bits_sorted, norms_sorted, always_bad, lo, hi, float(n)
    )
    total = float(np.sum(weights[blocked]))
    return total


def _coverage_sweep(
    patterns: np.ndarray,
    bit_positions: np.ndarray,
    norms_sorted: np.ndarray,
    always_bad: np.ndarray,
    lo: float,
    hi: float,
    width: float,
) -> np.ndarray:
    """Vectorized over patterns: is [lo, hi] fully covered by active blockers?

    A site at norm v blocks [v - width, v]; blockers are swept in norm
    order, so their left endpoints are nondecreasing and any gap left
    behind can never be filled later.
    """
    ordering = np.argsort(np.concatenate([norms_sorted, always_bad]), kind="stable")
    merged = np.concatenate([norms_sorted, always_bad])[ordering]
    src = np.concatenate(
        [np.arange(norms_sorted.size), np.full(always_bad.size, -1, dtype=np.int64)]
    )[ordering]

    n_patterns = patterns.size
    covered_to = np.full(n_patterns, -np.inf)
    started = np.zeros(n_patterns, dtype=bool)
    dead = np.zeros(n_patterns, dtype=bool)
    for v, j in zip(merged, src):
        if v < lo:
            continue
        start = v - width
        if start > hi:
            break
        if j < 0:
            active = ~dead
        else:
            active = (((patterns >> np.uint32(bit_positions[j])) & 1) == 1) & ~dead
        if start <= lo:
            started |= active
            np.maximum(covered_to, np.where(active, v, -np.inf), out=covered_to)
        else:
            # start > lo: patterns that never covered lo are free at lo
            dead |= active & ~started
            gap = active & started & (start > covered_to)
            dead |= gap
            extend = active & started & ~gap
            np.maximum(covered_to, np.where(extend, v, -np.inf), out=covered_to)
    return started & ~dead & (covered_to >= hi)


def a_n_bound(a: float, eta: float, n: int) -> tuple[float, bool]:
    """Closed-form bound exp(-(1-eta)^n (a^n (a-1)/n - 1)) on a_n.

    Requires a(1-eta) > 1 so the bound sequence is summable.  Returns
    (bound, vacuous) where vacuous marks values >= 1, which carry no
    information.  The bound presumes each width-n annulus at scale n is
    free with probability at least (1-eta)^n; at small n that premise can
    fail, so comparisons should treat small scales with care.
    """
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    if a * (1.0 - eta) <= 1.0:
        raise ValueError("need a(1-eta) > 1 for a summable bound")
    exponent = (1.0 - eta) ** n * (a**n * (a - 1.0) / n - 1.0)
    bound = math.exp(-exponent)
    return bound, bound >= 1.0


def quasi1d_threshold(delta: float, c_quasi: float) -> float:
    """Minimal growth ratio (1-delta)^(-C) for quasi-1D free-annulus summability."""
    if not (0.0 <= delta < 1.0):
        raise ValueError("delta must lie in [0, 1)")
    if c_quasi < 1.0:
        raise ValueError("quasi-1D constant must be >= 1")
    return (1.0 - delta) ** (-c_quasi)


@dataclass(frozen=True)
class ANSeriesRow:
    scale: int
    exact: float | None
    estimate: float
    std_error: float
    bound: float
    bound_eta: float
    bound_vacuous: bool
    degenerate: bool
    partial_sum: float


@dataclass(frozen=True, eq=False)
class ANSeriesReport:
    """Per-scale failure probabilities with bounds and a summability verdict."""

    rows: tuple[ANSeriesRow, ...]
    verdict: str  # summable | not-summable | inconclusive
    params: dict = field(default_factory=dict)

    def write_csv(self, fp: IO[str]) -> None:
        fp.write("n,exact,estimate,std_error,bound,eta,vacuous,partial_sum\n")
        for r in self.rows:
            exact = "" if r.exact is None else repr(r.exact)
            fp.write(
                f"{r.scale},{exact},{r.estimate!r},{r.std_error!r},{r.bound!r},"
                f"{r.bound_eta!r},{int(r.bound_vacuous)},{r.partial_sum!r}\n"
            )

    def to_records(self) -> list[dict]:
        head = {
            "record": "an_series",
            "verdict": self.verdict,
            "params": self.params,
            "row_count": len(self.rows),
        }
        rows = [
            {
                "record": "an_row",
                "n": r.scale,
                "exact": r.exact,
                "estimate": r.estimate,
                "std_error": r.std_error,
                "bound": r.bound,
                "eta": r.bound_eta,
                "vacuous": r.bound_vacuous,
                "degenerate": r.degenerate,
                "partial_sum": r.partial_sum,
            }
            for r in self.rows
        ]
        return [head] + rows


def _best_eta(a: float, n: int, grid: int = 99) -> tuple[float, float, bool]:
    """Tightest admissible plug-in bound over an eta grid in (0, 1 - 1/a)."""
    eta_max = 1.0 - 1.0 / a
    best = (math.inf, math.nan, True)
    for k in range(1, grid + 1):
        eta = eta_max * k / (grid + 1)
        bound, vacuous = a_n_bound(a, eta, n)
        if bound < best[0]:
            best = (bound, eta, vacuous)
    return best


def borel_cantelli_report(
    model: RandomPotentialModel,
    eps: float,
    a: float,
    n_range: tuple[int, int],
    trials: int,
    seed: int,
) -> ANSeriesReport:
    """Estimate a_n over a scale range, with exact values where affordable.

    Each scale draws from an independently derived seed.  The verdict is
    "summable" when the estimates trend downward over the top half of the
    range with last ratios below one; scales defined as zero (degenerate
    or empty) count in favor.
    """
    rows: list[ANSeriesRow] = []
    partial = 0.0
    for n in range(n_range[0], n_range[1] + 1):
        sub_seed = _rng.derive_seed(seed, 1, n)
        est = estimate_a_n(model, eps, a, n, trials, sub_seed)
        lo, hi = a**n, a ** (n + 1) - n
        degenerate = hi < lo
        exact: float | None = est.exact
        if exact is None:
            try:
                exact = brute_force_a_n(model, eps, a, n)
            except BudgetExceededError:
                exact = None
        bound, eta, vacuous = _best_eta(a, n)
        partial += est.value
        rows.append(
            ANSeriesRow(
                scale=n,
                exact=exact,
                estimate=est.value,
                std_error=est.std_error,
                bound=bound,
                bound_eta=eta,
                bound_vacuous=vacuous,
                degenerate=degenerate,
                partial_sum=partial,
            )
        )
    verdict = _summability_verdict(rows)
    return ANSeriesReport(
        tuple(rows),
        verdict,
        params={
            "eps": eps,
            "a": a,
            "n_range": list(n_range),
            "trials": trials,
            "seed": seed,
        },
    )


def _summability_verdict(rows: list[ANSeriesRow]) -> str:
    values = [r.estimate for r in rows]
    if len(values) < 3:
        return "inconclusive"
    top = values[len(values) // 2 :]
    if all(v == 0.0 for v in top):
        return "summable"
    if all(v >= 0.999 for v in top):
        return "not-summable"
    decreasing = all(b <= a_ + 1e-12 for a_, b in zip(top, top[1:]))
    ratios = [b / a_ for a_, b in zip(top, top[1:]) if a_ > 0]
    ratio_ok = all(r < 1.0 for r in ratios) if ratios else True
    if decreasing and ratio_ok:
        return "summable"
    if not decreasing and any(r >= 1.0 for r in ratios):
        return "not-summable"
    return "inconclusive"
