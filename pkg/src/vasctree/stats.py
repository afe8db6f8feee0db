"""Per-generation statistics, cumulative diameter distribution, power-law fit and
bifurcation (Murray) exponents."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientData, InvalidParameter
from .tree import VesselTree


@dataclass(frozen=True)
class GenerationRow:
    generation: int
    count: int
    diam_mean: float
    diam_std: float
    len_mean: float
    len_std: float


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    if len(x) == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1))


def generation_stats(tree: VesselTree) -> list[GenerationRow]:
    rows = []
    for g in sorted({s.generation for s in tree.segments}):
        segs = [s for s in tree.segments if s.generation == g]
        dm, ds = _mean_std(np.array([s.diameter for s in segs], dtype=float))
        lm, ls = _mean_std(np.array([s.length for s in segs], dtype=float))
        rows.append(GenerationRow(g, len(segs), dm, ds, lm, ls))
    return rows


@dataclass(frozen=True, eq=False)
class CumulativeDistribution:
    """``count[i]`` is the number of segments with diameter strictly greater than
    ``diameters[i]``; diameters are sorted ascending."""

    diameters: np.ndarray
    counts: np.ndarray
    total: int

    def __call__(self, d: float) -> int:
        # N(d) only changes at the stored diameters; below the smallest it is the total.
        i = np.searchsorted(self.diameters, d, side="right")
        if i == 0:
            return self.total
        return int(self.counts[i - 1])


def cumulative_from_diameters(diameters: Sequence[float]) -> CumulativeDistribution:
    d = np.sort(np.asarray(diameters, dtype=float))
    uniq = np.unique(d)
    counts = len(d) - np.searchsorted(d, uniq, side="right")
    return CumulativeDistribution(uniq, counts.astype(np.int64), len(d))


def cumulative_distribution(tree: VesselTree) -> CumulativeDistribution:
    return cumulative_from_diameters([s.diameter for s in tree.segments])


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    r2: float
    window: tuple[float, float]
    n_points: int
    intercept: float

    def __iter__(self):
        # unpacks as (gamma, r2)
        return iter((self.gamma, self.r2))


def default_window(dist: CumulativeDistribution, n_largest: int = 3, max_fraction: float = 0.9
                   ) -> tuple[float, float]:
    """Fit window skipping the few largest vessels and the terminal-most diameters.

    Excludes the ``n_largest`` largest distinct diameters and every diameter at
    which N(d) exceeds ``max_fraction`` of the segment count.
    """
    d, n = dist.diameters, dist.counts
    keep = np.ones(len(d), dtype=bool)
    if n_largest:
        keep[-n_largest:] = False
    keep &= n <= max_fraction * dist.total
    if not keep.any():
        raise InsufficientData("default window leaves no points to fit")
    return float(d[keep].min()), float(d[keep].max())


def fit_power_law(dist: CumulativeDistribution, window: Optional[Sequence[float]] = None) -> PowerLawFit:
    """Least-squares line through log N against log d inside ``window``; gamma is
    minus the slope."""
    if window is None:
        window = default_window(dist)
    lo, hi = float(window[0]), float(window[1])
    if lo > hi:
        raise InvalidParameter(f"window lower bound {lo} exceeds upper bound {hi}")
    d, n = np.asarray(dist.diameters, dtype=float), np.asarray(dist.counts, dtype=float)
    use = (d >= lo) & (d <= hi) & (n > 0) & (d > 0)
    if use.sum() < 3:
        raise InsufficientData(f"only {int(use.sum())} usable point(s) in window [{lo}, {hi}]")
    x, y = np.log(d[use]), np.log(n[use])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(-slope), r2, (lo, hi), int(use.sum()), float(intercept))


@dataclass(frozen=True)
class MurrayResult:
    node_id: int
    d_parent: float
    d_child1: float
    d_child2: float
    k: float
    defined: bool


def murray_exponent(d_parent: float, d1: float, d2: float, k_max: float = 10.0, tol: float = 1e-9) -> float:
    """Solve ``d_parent**k = d1**k + d2**k`` for k in (0, k_max] by bisection.

    Returns ``nan`` when no root lies in the range (including whenever a child
    is at least as wide as the parent).
    """
    if min(d_parent, d1, d2) <= 0 or max(d1, d2) >= d_parent:
        return math.nan
    a, b = d1 / d_parent, d2 / d_parent

    def f(k):
        return a ** k + b ** k - 1.0

    lo, hi = 0.0, k_max
    if f(hi) > 0:
        return math.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def murray_exponents(tree: VesselTree) -> list[MurrayResult]:
    out = []
    for s in tree.segments:
        kids = tree.children(s.id)
        if len(kids) != 2:
            continue
        c1, c2 = kids
        k = murray_exponent(s.diameter, c1.diameter, c2.diameter)
        out.append(MurrayResult(s.id, s.diameter, c1.diameter, c2.diameter, k, not math.isnan(k)))
    return out
