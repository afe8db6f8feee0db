import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import phantom_case
from oracles import murray_grid_scan
from vasctree.errors import InsufficientData, InvalidParameter
from vasctree.stats import (CumulativeDistribution, cumulative_distribution, cumulative_from_diameters,
                            default_window, fit_power_law, generation_stats, murray_exponent,
                            murray_exponents)
from vasctree.tree import Segment, VesselTree
from vasctree.validation import generation_mean_diameters, match_segments


def _tree(diams, parents=None, lengths=None):
    n = len(diams)
    parents = parents or [None] + [0] * (n - 1)
    lengths = lengths or [100.0] * n
    gens = []
    for p in parents:
        gens.append(1 if p is None else gens[p] + 1)
    segs = tuple(Segment(i, parents[i], np.zeros((0, 3), int), gens[i], lengths[i], diams[i])
                 for i in range(n))
    return VesselTree(segs, (20.0, 20.0, 20.0), (1, 1, 1))


def test_single_segment_stats():
    rows = generation_stats(_tree([100.0]))
    assert len(rows) == 1 and rows[0].count == 1 and rows[0].diam_std == 0.0
    assert rows[0].diam_mean == 100.0


def test_generation_stats_sample_std():
    rows = generation_stats(_tree([100.0, 50.0, 70.0], lengths=[1.0, 2.0, 4.0]))
    assert [r.count for r in rows] == [1, 2]
    assert rows[1].diam_mean == 60.0
    assert rows[1].diam_std == pytest.approx(np.std([50, 70], ddof=1))
    assert rows[1].len_std == pytest.approx(np.std([2, 4], ddof=1))


def test_phantom_generation_counts(g4_phantom):
    gt, _, _, _, tree = g4_phantom
    assert [r.count for r in generation_stats(tree)] == [1, 2, 4, 8]
    for g, (m, t) in generation_mean_diameters(match_segments(tree, gt)).items():
        assert t == pytest.approx(240 * 2 ** (-(g - 1) / 3))
        assert abs(m / t - 1) < 0.10


def test_cumulative_strict_inequality():
    n = cumulative_distribution(_tree([100.0]))
    assert n(50) == 1 and n(100) == 0
    n = cumulative_from_diameters([1.0, 2.0, 3.0])
    assert [n(x - 1e-9) for x in (1.0, 2.0, 3.0)] + [n(3.0)] == [3, 2, 1, 0]


@given(st.lists(st.floats(0.1, 1000), min_size=1, max_size=50), st.floats(0, 1100))
def test_cumulative_matches_count(ds, d):
    assert cumulative_from_diameters(ds)(d) == sum(x > d for x in ds)


def test_cumulative_on_truth_diameters():
    gt = phantom_case(generations=4)[0]
    dist = cumulative_from_diameters([s.diameter for s in gt.segments])
    for g in range(1, 5):
        dg = 240 * 2 ** (-(g - 1) / 3)
        assert dist(dg * (1 - 1e-9)) == 2 ** g - 1


def test_exact_power_law():
    d = np.geomspace(10, 1000, 25)
    dist = CumulativeDistribution(d, d ** -1.5, 10**9)
    fit = fit_power_law(dist, (d[0], d[-1]))
    assert abs(fit.gamma - 1.5) < 1e-9
    gamma, r2 = fit
    assert r2 == pytest.approx(1.0)


def test_power_law_errors():
    dist = cumulative_from_diameters([10.0, 20.0, 30.0, 40.0])
    with pytest.raises(InsufficientData):
        fit_power_law(dist, (10.0, 20.0))
    with pytest.raises(InvalidParameter):
        fit_power_law(dist, (30.0, 10.0))


def test_default_window_drops_extremes():
    dist = cumulative_from_diameters(np.arange(1, 101, dtype=float))
    lo, hi = default_window(dist)
    assert hi == 97.0
    assert dist(lo) <= 90


def test_murray_cases():
    assert abs(murray_exponent(2.0, 2 ** (2 / 3), 2 ** (2 / 3)) - 3.0) < 1e-6
    assert abs(murray_exponent(2.0, 1.0, 1.0) - 1.0) < 1e-6
    assert math.isnan(murray_exponent(2.0, 2.0, 1.0))
    assert math.isnan(murray_exponent(2.0, 0.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_murray_matches_grid_scan(a, b):
    k = murray_exponent(1.0, a, b)
    ref = murray_grid_scan(1.0, a, b)
    if math.isnan(ref):
        assert math.isnan(k)
    else:
        assert abs(k - ref) <= 2e-6


def test_murray_flags_undefined():
    t = _tree([100.0, 120.0, 50.0])
    (res,) = murray_exponents(t)
    assert res.node_id == 0 and not res.defined and math.isnan(res.k)
    (res,) = murray_exponents(_tree([2.0, 2 ** (2 / 3), 2 ** (2 / 3)]))
    assert res.defined and abs(res.k - 3) < 1e-6
