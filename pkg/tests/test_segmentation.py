import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import phantom_case
from oracles import bfs_flood, union_find_count
from vasctree import BinaryMask, BoundsError, Volume3D
from vasctree.errors import InvalidParameter, SeedOutsideRange
from vasctree.segmentation import (GrowParams, count_components, in_range, largest_component,
                                   region_grow, tissue_preset, vessel_preset)


def test_uniform_volume_fills():
    m = region_grow(Volume3D(np.full((3, 3, 3), 2000)), GrowParams(1500, seed=(1, 1, 1)))
    assert m.count == 27


def test_seed_errors():
    vol = Volume3D(np.zeros((3, 3, 3)))
    with pytest.raises(SeedOutsideRange):
        region_grow(vol, vessel_preset((0, 0, 0)))
    with pytest.raises(BoundsError):
        region_grow(vol, GrowParams(-1, seed=(3, 0, 0)))
    with pytest.raises(InvalidParameter):
        GrowParams(5, 4)
    with pytest.raises(InvalidParameter):
        region_grow(vol, GrowParams(-1))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 18, 26]))
def test_matches_bfs_oracle(seed, conn):
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 100, (12, 11, 10))
    lo, hi = sorted(rng.integers(0, 100, 2))
    s = tuple(int(x) for x in np.argwhere((vals >= lo) & (vals <= hi))[0]) \
        if ((vals >= lo) & (vals <= hi)).any() else None
    if s is None:
        return
    got = region_grow(Volume3D(vals), GrowParams(lo, hi, s, conn)).membership
    np.testing.assert_array_equal(got, bfs_flood(vals, lo, hi, s, conn))


def test_conn_ordering_monotone(rng):
    vals = rng.integers(0, 3, (10, 10, 10))
    seed = tuple(np.argwhere(vals >= 1)[0])
    sizes = [region_grow(Volume3D(vals), GrowParams(1, 2, seed, c)).count for c in (6, 18, 26)]
    assert sizes == sorted(sizes)


def test_vessel_preset_recovers_phantom_lumen():
    gt, vol, vessel, *_ = phantom_case(generations=3)
    from vasctree.phantom import root_seed
    m = region_grow(vol, vessel_preset(root_seed(gt)))
    np.testing.assert_array_equal(m.membership, vol.values == 6000)


def test_tissue_and_vessel_presets_disjoint(rng):
    vals = rng.integers(0, 7000, (8, 8, 8))
    v, t = vessel_preset(), tissue_preset()
    assert not (in_range(vals, v.lo, v.hi) & in_range(vals, t.lo, t.hi)).any()


def test_component_counts():
    assert count_components(np.zeros((3, 3, 3), bool)) == 0
    m = np.zeros((4, 4, 4), bool)
    m[0, 0, 0] = m[3, 3, 3] = True
    assert count_components(m, 26) == 2
    m[1, 1, 1] = m[2, 2, 2] = True
    assert count_components(m, 26) == 1
    assert count_components(m, 18) == 4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 18, 26]), st.floats(0.05, 0.5))
def test_components_match_union_find(seed, conn, density):
    m = np.random.default_rng(seed).random((16, 16, 16)) < density
    assert count_components(m, conn) == union_find_count(m, conn)


def test_largest_component_tie_breaks_on_first_voxel():
    m = np.zeros((6, 1, 1), bool)
    m[[1, 2, 4, 5], 0, 0] = True
    out = largest_component(BinaryMask(m), 26).membership[:, 0, 0]
    assert out.tolist() == [False, True, True, False, False, False]
