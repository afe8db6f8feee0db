"""Slow, obviously-correct reference implementations used as test oracles."""
from collections import deque
from itertools import product

import numba
import numpy as np


def brute_offsets(conn):
    out = []
    for d in product((-1, 0, 1), repeat=3):
        nz = sum(c != 0 for c in d)
        if nz == 0:
            continue
        if (conn == 6 and nz == 1) or (conn == 18 and nz <= 2) or conn == 26:
            out.append(d)
    return out


def bfs_flood(values, lo, hi, seed, conn):
    """Breadth-first flood fill over voxels with lo <= v <= hi."""
    shape = values.shape
    out = np.zeros(shape, dtype=bool)
    if not lo <= values[seed] <= hi:
        return out
    offs = brute_offsets(conn)
    out[seed] = True
    q = deque([seed])
    while q:
        p = q.popleft()
        for d in offs:
            n = (p[0] + d[0], p[1] + d[1], p[2] + d[2])
            if all(0 <= n[a] < shape[a] for a in range(3)) and not out[n] and lo <= values[n] <= hi:
                out[n] = True
                q.append(n)
    return out


def union_find_count(mask, conn):
    """Component count by union-find over every adjacent foreground pair."""
    idx = {tuple(p): i for i, p in enumerate(np.argwhere(mask))}
    parent = list(range(len(idx)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for p, i in idx.items():
        for d in brute_offsets(conn):
            j = idx.get((p[0] + d[0], p[1] + d[1], p[2] + d[2]))
            if j is not None:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[ra] = rb
    return len({find(i) for i in range(len(parent))})


@numba.njit(cache=True)
def _brute_edt(feat_pts, feat_lin, shape, w):
    nx, ny, nz = shape
    sq = np.empty((nx, ny, nz))
    near = np.empty((nx, ny, nz), dtype=np.int64)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                best = np.inf
                arg = -1
                # features are visited in increasing linear index, so a strict
                # comparison keeps the lowest index among ties
                for f in range(feat_pts.shape[0]):
                    di = (i - feat_pts[f, 0]) ** 2 * w[0]
                    dj = (j - feat_pts[f, 1]) ** 2 * w[1]
                    dk = (k - feat_pts[f, 2]) ** 2 * w[2]
                    d = di + dj + dk
                    if d < best:
                        best = d
                        arg = feat_lin[f]
                sq[i, j, k] = best
                near[i, j, k] = arg
    return sq, near


def brute_edt(feature, spacing=(1.0, 1.0, 1.0)):
    """All-pairs squared distance and lowest-linear-index nearest feature."""
    nx, ny, _ = feature.shape
    pts = np.argwhere(feature)
    lin = pts[:, 0] + nx * (pts[:, 1] + ny * pts[:, 2])
    order = np.argsort(lin, kind="stable")
    w = np.array([float(s) ** 2 for s in spacing])
    return _brute_edt(pts[order].astype(np.int64), lin[order].astype(np.int64),
                      np.array(feature.shape, dtype=np.int64), w)


def murray_grid_scan(dp, d1, d2, k_max=10.0, step=1e-6):
    """First sign change of (d1/dp)^k + (d2/dp)^k - 1 on a k grid of ``step``.

    Coarse pass at 1e-3 to bracket, then a full 1e-6 grid inside the bracket.
    """
    a, b = d1 / dp, d2 / dp
    coarse = np.arange(0.0, k_max + 1e-3, 1e-3)
    f = a ** coarse + b ** coarse - 1.0
    i = int(np.argmax(f <= 0))
    if f[i] > 0:
        return float("nan")
    fine = np.arange(coarse[max(i - 1, 0)], coarse[i] + step, step)
    g = a ** fine + b ** fine - 1.0
    j = int(np.argmax(g <= 0))
    return float(fine[j])


def capsule_oracle(dims, spacing, segments):
    """Voxels whose centre lies within radius of any segment (start, end, radius)."""
    grid = np.indices(dims).reshape(3, -1).T * np.asarray(spacing, dtype=float)
    inside = np.zeros(len(grid), dtype=bool)
    for a, b, r in segments:
        a, b = np.asarray(a, float), np.asarray(b, float)
        ab = b - a
        L2 = ab @ ab
        t = np.clip(((grid - a) @ ab) / L2, 0, 1) if L2 > 0 else np.zeros(len(grid))
        closest = a + t[:, None] * ab
        inside |= ((grid - closest) ** 2).sum(1) <= r * r
    return inside.reshape(dims)


def has_full_cube(arr):
    a = arr.astype(bool)
    return bool((a[:-1, :-1, :-1] & a[1:, :-1, :-1] & a[:-1, 1:, :-1] & a[:-1, :-1, 1:]
                 & a[1:, 1:, :-1] & a[1:, :-1, 1:] & a[:-1, 1:, 1:] & a[1:, 1:, 1:]).any())


def line_mask(dims, p0, p1, n=None):
    """Digital straight segment: one voxel per step along the dominant axis."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = n or int(np.abs(p1 - p0).max()) + 1
    pts = np.round(p0 + np.linspace(0, 1, n)[:, None] * (p1 - p0)).astype(int)
    m = np.zeros(dims, dtype=bool)
    m[tuple(pts.T)] = True
    return m


def random_tube_union(rng, dims=(32, 32, 32), n_tubes=None):
    """Union of random tubes, each starting at an earlier end point.

    A radius of at least 1 keeps every digital tube 26-connected (a voxel centre
    is never more than sqrt(3)/2 from the nearest axis point).
    """
    n_tubes = n_tubes or int(rng.integers(1, 5))
    lo, hi = 4, np.array(dims) - 5
    pts = [rng.integers(lo, hi)]
    segs = []
    for _ in range(n_tubes):
        # branch from any existing point so the union stays connected
        start = pts[int(rng.integers(len(pts)))]
        end = rng.integers(lo, hi)
        pts.append(end)
        segs.append((start, end, float(rng.uniform(1.0, 3.0))))
    return capsule_oracle(dims, (1.0, 1.0, 1.0), segs)
