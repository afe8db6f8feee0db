import numpy as np
import pytest

from cases import cylinder, phantom_case
from vasctree import BinaryMask, EmptyMask, NoRootCandidate
from vasctree.pipeline import extract_tree, radius_field
from vasctree.skeleton import Skeleton, thin
from vasctree.tree import (arc_length, build_graph, measure, prune, retract_tips, root_tree)
from vasctree.volume import DistanceField
from vasctree.validation import generation_mean_diameters, match_segments


def _skel(arr, spacing=(20.0, 20.0, 20.0)):
    return Skeleton(BinaryMask(arr, spacing))


def _check_tree(tree):
    ids = [s.id for s in tree.segments]
    assert ids == list(range(len(ids)))
    roots = [s for s in tree.segments if s.parent is None]
    assert len(roots) == 1 and roots[0].id == tree.root
    for s in tree.segments:
        if s.parent is not None:
            p = tree.segments[s.parent]
            assert s.generation == p.generation + 1
            assert p.id < s.id
        else:
            assert s.generation == 1


def test_straight_path_graph():
    a = np.zeros((12, 3, 3), bool)
    a[1:11, 1, 1] = True
    g = build_graph(_skel(a))
    assert len(g.nodes) == 2 and len(g.edges) == 1
    for hint in ((0, 1, 1), (11, 1, 1)):
        t = root_tree(g, hint)
        assert len(t) == 1 and t.segments[0].generation == 1
    assert tuple(root_tree(g, (0, 1, 1)).segments[0].path[0]) == (1, 1, 1)
    assert tuple(root_tree(g, (11, 1, 1)).segments[0].path[0]) == (10, 1, 1)


def test_y_graph(y_phantom):
    _, _, _, skel, _ = y_phantom
    g = build_graph(skel)
    assert len(g.nodes_of_kind("endpoint")) == 3
    assert len(g.nodes_of_kind("junction")) == 1
    assert len(g.nodes) == 4 and len(g.edges) == 3


def test_g4_graph(g4_phantom):
    gt, _, _, skel, tree = g4_phantom
    g = build_graph(skel)
    assert len(g.edges) == 15
    assert len(g.nodes_of_kind("junction")) == 7
    assert len(g.nodes_of_kind("endpoint")) == 9
    assert tree.generation_counts() == {1: 1, 2: 2, 3: 4, 4: 8}
    assert len(tree.leaves) == 8
    _check_tree(tree)


def test_empty_and_rootless():
    with pytest.raises(EmptyMask):
        build_graph(_skel(np.zeros((3, 3, 3), bool)))
    ring = np.zeros((7, 7, 3), bool)
    ring[1:6, 1, 1] = ring[1:6, 5, 1] = ring[1, 1:6, 1] = ring[5, 1:6, 1] = True
    g = build_graph(_skel(ring))
    with pytest.raises(NoRootCandidate):
        root_tree(g, (0, 0, 0))


def _loop_case():
    """Two junctions joined by a wide lower and a thin upper path, plus tails."""
    a = np.zeros((30, 18, 3), bool)
    a[0:6, 8, 1] = True
    a[20:30, 8, 1] = True
    a[6:20, 3, 1] = True      # lower path
    a[6:20, 13, 1] = True     # upper path
    a[6, 3:14, 1] = True
    a[20, 3:14, 1] = True
    sq = np.full(a.shape, 16.0 * 400)
    sq[:, 10:, :] = 1.0 * 400   # the upper path is thin
    return a, DistanceField(sq, (20.0, 20.0, 20.0))


def test_cycle_broken_at_thinnest_edge():
    a, edt = _loop_case()
    g = build_graph(_skel(a))
    t = root_tree(g, (0, 8, 1), edt)
    _check_tree(t)
    assert sum("cycle" in w for w in t.warnings) == 1
    covered = np.zeros(a.shape, bool)
    for s in t.segments:
        covered[tuple(s.path.T)] = True
    assert not covered[13, 13, 1]      # thin side cut
    assert covered[13, 3, 1]           # wide side kept
    assert covered[0, 8, 1] and covered[29, 8, 1]


def _spur_case():
    mask = cylinder(4.0, 40, axis=2)
    sk = thin(mask).membership.copy()
    c = (mask.dims[0] - 1) // 2
    mid = mask.dims[2] // 2
    assert sk[c, c, mid]
    sk[c + 1, c, mid] = sk[c + 2, c, mid] = True
    return mask, _skel(sk)


def test_spur_is_pruned():
    mask, skel = _spur_case()
    edt = radius_field(mask)
    g = build_graph(skel)
    t = root_tree(g, (0, 0, 0), edt)
    assert len(t) == 3
    p = prune(t, edt, 1.0)
    assert len(p) == 1
    assert any("pruned" in w for w in p.warnings)
    assert prune(t, edt, 0.0) is t


def test_phantom_prune_noop(g4_phantom):
    gt, _, vessel, skel, _ = g4_phantom
    edt = radius_field(vessel)
    t = root_tree(build_graph(skel), (0, 0, 0), edt)
    assert prune(t, edt, 1.0) is t


def test_arc_length_straight():
    path = np.stack([np.arange(11), np.zeros(11, int), np.zeros(11, int)], 1)
    assert arc_length(path, (20, 20, 20)) == 200.0
    assert arc_length(path, (20, 20, 20), stride=3) == 200.0
    assert arc_length(path[:1], (20, 20, 20)) == 0.0


def test_arc_length_diagonal_stride_unbiased():
    # staircase: alternating x and xy steps approximates a line at 26.6 degrees
    steps = np.array([[1, 0, 0], [1, 1, 0]] * 20)
    path = np.vstack([[0, 0, 0], np.cumsum(steps, 0)])
    true = np.hypot(40, 20)
    assert abs(arc_length(path, (1, 1, 1), 3) / true - 1) < 0.03


def test_cylinder_diameter():
    mask = cylinder(4.0, 40, axis=2)
    t = extract_tree(mask, thin(mask))
    assert len(t) == 1
    assert abs(t.segments[0].diameter - 160.0) <= 20.0


def test_murray_phantom_generation_ratios(g4_phantom):
    gt, _, _, _, tree = g4_phantom
    means = generation_mean_diameters(match_segments(tree, gt))
    for g in range(2, 5):
        assert abs(means[g][0] / means[g - 1][0] / 2 ** (-1 / 3) - 1) < 0.10


def test_retract_only_shortens_free_ends(g4_phantom):
    gt, _, vessel, skel, _ = g4_phantom
    edt = radius_field(vessel)
    t = root_tree(build_graph(skel), (0, 0, 0), edt)
    r = retract_tips(t, edt)
    parents = {s.parent for s in t.segments}
    for a, b in zip(t.segments, r.segments):
        if a.parent is not None and a.id in parents:
            np.testing.assert_array_equal(a.path, b.path)
        assert len(b.path) >= len(a.path) - len(a.path) // 2


def test_measure_fills_every_segment(g4_phantom):
    tree = g4_phantom[4]
    assert all(s.diameter > 0 and s.length > 0 for s in tree.segments)
    m2 = measure(tree, radius_field(g4_phantom[2]))
    assert [s.diameter for s in m2.segments] == [s.diameter for s in tree.segments]
