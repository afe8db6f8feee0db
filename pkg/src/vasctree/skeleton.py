"""Topology-preserving 3D thinning to a one-voxel-wide centreline.

Foreground uses 26-connectivity and background 6-connectivity. A voxel is
*simple* when its removal changes neither the number of foreground components,
nor cavities, nor tunnels; locally that is ``T26 == 1 and T6 == 1`` where the
topological numbers are counted in the 26- and 18-neighbourhoods respectively.

Each pass runs six directional sub-iterations. Within a sub-iteration the
candidate set is computed from the state at the start of the sub-iteration;
candidates are then removed one at a time in linear-index order after
re-checking that they are still simple, non-endpoint voxels. The result does not
depend on thread count.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numba
import numpy as np
from scipy import ndimage

from .errors import EmptyMask
from .volume import BinaryMask

ENDPOINT, REGULAR, JUNCTION = 1, 2, 3

# The 27 cube cells are numbered c = (dx+1)*9 + (dy+1)*3 + (dz+1); 13 is the centre.
_CELLS = np.array(list(product((-1, 0, 1), repeat=3)), dtype=np.int64)


def _adjacency(max_l1: int, allowed) -> np.ndarray:
    adj = np.full((27, 26), -1, dtype=np.int64)
    for a in range(27):
        if a not in allowed:
            continue
        n = 0
        for b in range(27):
            if b == a or b not in allowed:
                continue
            d = np.abs(_CELLS[a] - _CELLS[b])
            if d.max() == 1 and d.sum() <= max_l1:
                adj[a, n] = b
                n += 1
    return adj


_L1 = np.abs(_CELLS).sum(axis=1)
_N26 = [c for c in range(27) if c != 13]
_N18 = [c for c in range(27) if 0 < _L1[c] <= 2]
_ADJ26 = _adjacency(3, set(_N26))
_ADJ6_IN_18 = _adjacency(1, set(_N18))
_FACES = np.array([c for c in range(27) if _L1[c] == 1], dtype=np.int64)
_N18_ARR = np.array(_N18, dtype=np.int64)

# Sub-iteration order: opposite directions alternate to keep the result centred.
DIRECTIONS = np.array(
    [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)], dtype=np.int64
)


@numba.njit(cache=True)
def _load_cube(P, i, j, k, cube):
    c = 0
    for a in range(-1, 2):
        for b in range(-1, 2):
            for d in range(-1, 2):
                cube[c] = P[i + a, j + b, k + d]
                c += 1


@numba.njit(cache=True)
def _t26(cube, adj26, stack, seen):
    # Number of 26-components of the foreground in the punctured 26-neighbourhood.
    for c in range(27):
        seen[c] = False
    ncomp = 0
    for s in range(27):
        if s == 13 or cube[s] == 0 or seen[s]:
            continue
        ncomp += 1
        if ncomp > 1:
            return ncomp
        seen[s] = True
        top = 1
        stack[0] = s
        while top > 0:
            top -= 1
            a = stack[top]
            for t in range(26):
                b = adj26[a, t]
                if b < 0:
                    break
                if cube[b] != 0 and not seen[b]:
                    seen[b] = True
                    stack[top] = b
                    top += 1
    return ncomp


@numba.njit(cache=True)
def _t6(cube, adj6, faces, stack, seen):
    # Number of 6-components of the background in the punctured 18-neighbourhood
    # that touch one of the six face neighbours.
    for c in range(27):
        seen[c] = False
    ncomp = 0
    for f in range(6):
        s = faces[f]
        if cube[s] != 0 or seen[s]:
            continue
        ncomp += 1
        if ncomp > 1:
            return ncomp
        seen[s] = True
        top = 1
        stack[0] = s
        while top > 0:
            top -= 1
            a = stack[top]
            for t in range(26):
                b = adj6[a, t]
                if b < 0:
                    break
                if cube[b] == 0 and not seen[b]:
                    seen[b] = True
                    stack[top] = b
                    top += 1
    return ncomp


@numba.njit(cache=True)
def _n_neighbours(cube):
    n = 0
    for c in range(27):
        if c != 13 and cube[c] != 0:
            n += 1
    return n


@numba.njit(cache=True)
def _removable(P, i, j, k, cube, adj26, adj6, faces, stack, seen):
    _load_cube(P, i, j, k, cube)
    if _n_neighbours(cube) <= 1:
        return False
    if _t26(cube, adj26, stack, seen) != 1:
        return False
    return _t6(cube, adj6, faces, stack, seen) == 1


@numba.njit(cache=True)
def _is_simple(P, i, j, k, adj26, adj6, faces):
    cube = np.empty(27, np.uint8)
    stack = np.empty(27, np.int64)
    seen = np.empty(27, np.bool_)
    _load_cube(P, i, j, k, cube)
    return _t26(cube, adj26, stack, seen) == 1 and _t6(cube, adj6, faces, stack, seen) == 1


@numba.njit(parallel=True, cache=True)
def _mark_candidates(P, pts, d, flags, adj26, adj6, faces):
    n = pts.shape[0]
    for t in numba.prange(n):
        cube = np.empty(27, np.uint8)
        stack = np.empty(27, np.int64)
        seen = np.empty(27, np.bool_)
        i = pts[t, 0]
        j = pts[t, 1]
        k = pts[t, 2]
        flags[t] = False
        if P[i, j, k] == 0 or P[i + d[0], j + d[1], k + d[2]] != 0:
            continue
        flags[t] = _removable(P, i, j, k, cube, adj26, adj6, faces, stack, seen)


@numba.njit(cache=True)
def _remove_sequential(P, pts, flags, adj26, adj6, faces):
    cube = np.empty(27, np.uint8)
    stack = np.empty(27, np.int64)
    seen = np.empty(27, np.bool_)
    removed = 0
    for t in range(pts.shape[0]):
        if not flags[t]:
            continue
        i = pts[t, 0]
        j = pts[t, 1]
        k = pts[t, 2]
        if _removable(P, i, j, k, cube, adj26, adj6, faces, stack, seen):
            P[i, j, k] = 0
            removed += 1
    return removed


def _points_in_linear_order(P: np.ndarray) -> np.ndarray:
    # argwhere on the transposed array enumerates z-slowest / x-fastest.
    kji = np.argwhere(P.transpose(2, 1, 0) != 0)
    return np.ascontiguousarray(kji[:, ::-1]).astype(np.int64)


def thin_array(mask: np.ndarray) -> np.ndarray:
    """Thin a boolean array; returns a new boolean array of the same shape."""
    P = np.pad(np.asarray(mask, dtype=np.uint8), 1)
    P = np.ascontiguousarray(P)
    while True:
        pts = _points_in_linear_order(P)
        flags = np.zeros(len(pts), dtype=np.bool_)
        removed = 0
        for d in DIRECTIONS:
            _mark_candidates(P, pts, d, flags, _ADJ26, _ADJ6_IN_18, _FACES)
            removed += _remove_sequential(P, pts, flags, _ADJ26, _ADJ6_IN_18, _FACES)
        if removed == 0:
            break
    return P[1:-1, 1:-1, 1:-1].astype(bool)


@dataclass(frozen=True, eq=False)
class Skeleton:
    mask: BinaryMask

    @property
    def dims(self):
        return self.mask.dims

    @property
    def spacing(self):
        return self.mask.spacing

    @property
    def membership(self) -> np.ndarray:
        return self.mask.membership


def thin(mask: BinaryMask) -> Skeleton:
    if not mask.membership.any():
        raise EmptyMask("cannot thin an empty mask")
    return Skeleton(BinaryMask(thin_array(mask.membership), mask.spacing))


def is_simple(arr: np.ndarray, idx) -> bool:
    """Direct simple-point test for voxel ``idx`` of a boolean array."""
    P = np.ascontiguousarray(np.pad(np.asarray(arr, dtype=np.uint8), 1))
    i, j, k = (int(c) + 1 for c in idx)
    return bool(_is_simple(P, i, j, k, _ADJ26, _ADJ6_IN_18, _FACES))


def neighbour_count(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=bool)
    kernel = np.ones((3, 3, 3), dtype=np.int32)
    kernel[1, 1, 1] = 0
    return ndimage.convolve(arr.astype(np.int32), kernel, mode="constant", cval=0)


def classify(skel) -> np.ndarray:
    """Per-voxel label: 0 background, 1 endpoint, 2 regular, 3 junction."""
    arr = skel.membership if hasattr(skel, "membership") else np.asarray(skel, dtype=bool)
    n = neighbour_count(arr)
    labels = np.zeros(arr.shape, dtype=np.int8)
    labels[arr & (n <= 1)] = ENDPOINT
    labels[arr & (n == 2)] = REGULAR
    labels[arr & (n >= 3)] = JUNCTION
    return labels
