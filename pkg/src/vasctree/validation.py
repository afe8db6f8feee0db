"""Comparison of a measured vessel tree against phantom ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .phantom import GroundTruth
from .tree import VesselTree


@dataclass(frozen=True)
class SegmentMatch:
    measured: int
    truth: int
    generation: int
    length: float
    true_length: float
    diameter: float
    true_diameter: float

    @property
    def length_error(self) -> float:
        return abs(self.length - self.true_length)


def match_segments(tree: VesselTree, gt: GroundTruth) -> list[SegmentMatch]:
    """Pair measured segments with truth segments top-down.

    The roots are paired, then the children of every matched pair are assigned
    to each other by minimum total distance between their far end points.
    Unmatched segments (topology disagreement) are left out.
    """
    sp = np.asarray(tree.spacing, dtype=float)
    out = []
    stack = [(tree.root, gt.root.id)]
    while stack:
        m_id, t_id = stack.pop()
        m, t = tree.segments[m_id], gt.segments[t_id]
        out.append(SegmentMatch(m_id, t_id, t.generation, m.length, t.length,
                                m.diameter if m.diameter is not None else float("nan"), t.diameter))
        mk, tk = tree.children(m_id), gt.children(t_id)
        if not mk or not tk:
            continue
        cost = np.array([[np.linalg.norm(c.path[-1] * sp - np.asarray(tc.end)) for tc in tk] for c in mk])
        rows, cols = linear_sum_assignment(cost)
        stack.extend((mk[r].id, tk[c].id) for r, c in zip(rows, cols))
    return sorted(out, key=lambda x: x.truth)


def generation_mean_diameters(matches: list[SegmentMatch]) -> dict[int, tuple[float, float]]:
    """Per generation: (measured mean diameter, true mean diameter)."""
    out = {}
    for g in sorted({m.generation for m in matches}):
        sel = [m for m in matches if m.generation == g]
        out[g] = (float(np.mean([m.diameter for m in sel])), float(np.mean([m.true_diameter for m in sel])))
    return out
