"""Voxel-grid data model, neighbourhoods and the exact Euclidean distance transform.

Arrays are held in memory with shape ``(nx, ny, nz)`` and indexed ``[i, j, k]``.
The *linear index* of a voxel is ``i + nx * (j + ny * k)`` (x fastest), which is
also the order used on disk, so a linear index read from a dump refers to the
same voxel in memory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence, Tuple

import numba
import numpy as np

from .errors import BoundsError, EmptyFeatureSet, InvalidParameter

VoxelIndex = Tuple[int, int, int]
Dims = Tuple[int, int, int]
Spacing = Tuple[float, float, float]

DEFAULT_SPACING_UM: Spacing = (20.0, 20.0, 20.0)
CONNECTIVITIES = (6, 18, 26)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _check_grid(dims, spacing) -> tuple[Dims, Spacing]:
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise InvalidParameter(f"dims must be three positive integers, got {dims}")
    if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
        raise InvalidParameter(f"spacing must be three positive numbers, got {spacing}")
    return dims, spacing


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Scalar field on a regular grid; ``spacing`` is in micrometres per voxel."""

    values: np.ndarray
    spacing: Spacing = DEFAULT_SPACING_UM

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if values.ndim != 3:
            raise InvalidParameter("volume values must be a 3D array")
        _, spacing = _check_grid(values.shape, self.spacing)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> Dims:
        return tuple(self.values.shape)

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    membership: np.ndarray
    spacing: Spacing = DEFAULT_SPACING_UM

    def __post_init__(self):
        m = np.array(self.membership, dtype=bool, copy=True)
        if m.ndim != 3:
            raise InvalidParameter("mask membership must be a 3D array")
        _, spacing = _check_grid(m.shape, self.spacing)
        object.__setattr__(self, "membership", _frozen(m))
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> Dims:
        return tuple(self.membership.shape)

    @property
    def count(self) -> int:
        return int(self.membership.sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.membership, other.membership)

    def same_grid(self, other) -> bool:
        return self.dims == other.dims and self.spacing == other.spacing


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distance (µm) from every voxel to the nearest feature voxel.

    ``sq_distance`` holds the squared distance in µm²; for uniform spacing it is an
    exact integer multiple of ``spacing**2``. ``nearest`` holds the linear index of
    the attaining feature voxel, or is ``None`` when not requested.
    """

    sq_distance: np.ndarray
    spacing: Spacing
    nearest: Optional[np.ndarray] = None
    distance: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sq_distance", _frozen(self.sq_distance))
        if self.nearest is not None:
            object.__setattr__(self, "nearest", _frozen(self.nearest))
        object.__setattr__(self, "distance", _frozen(np.sqrt(self.sq_distance)))

    @property
    def dims(self) -> Dims:
        return tuple(self.sq_distance.shape)

    def nearest_index(self, idx: VoxelIndex) -> VoxelIndex:
        if self.nearest is None:
            raise ValueError("distance field was computed without the nearest-feature channel")
        return unravel(int(self.nearest[idx]), self.dims)


def linear_index(idx: VoxelIndex, dims: Dims) -> int:
    i, j, k = idx
    return int(i) + dims[0] * (int(j) + dims[1] * int(k))


def unravel(lin: int, dims: Dims) -> VoxelIndex:
    i = lin % dims[0]
    rest = lin // dims[0]
    return (i, rest % dims[1], rest // dims[1])


def in_bounds(idx: Sequence[int], dims: Dims) -> bool:
    return all(0 <= int(c) < d for c, d in zip(idx, dims))


def offsets(conn: int) -> np.ndarray:
    """Neighbour offsets for a 6-, 18- or 26-neighbourhood, in lexicographic order."""
    if conn not in CONNECTIVITIES:
        raise InvalidParameter(f"connectivity must be one of {CONNECTIVITIES}, got {conn}")
    max_nonzero = {6: 1, 18: 2, 26: 3}[conn]
    out = [d for d in product((-1, 0, 1), repeat=3) if 0 < sum(map(abs, d)) <= max_nonzero]
    return np.array(out, dtype=np.int64)


def neighbors(idx: VoxelIndex, dims: Dims, conn: int = 26) -> list[VoxelIndex]:
    if len(idx) != 3 or not in_bounds(idx, dims):
        raise BoundsError(f"voxel {tuple(idx)} outside grid {tuple(dims)}")
    out = []
    for d in offsets(conn):
        n = (int(idx[0] + d[0]), int(idx[1] + d[1]), int(idx[2] + d[2]))
        if in_bounds(n, dims):
            out.append(n)
    return out


def structure(conn: int) -> np.ndarray:
    """3x3x3 boolean structuring element for ``conn`` (for scipy.ndimage)."""
    s = np.zeros((3, 3, 3), dtype=bool)
    s[1, 1, 1] = True
    for d in offsets(conn):
        s[tuple(d + 1)] = True
    return s


# ---------------------------------------------------------------------------
# Exact squared-Euclidean distance transform (separable lower envelopes)
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _envelope_1d(f, w, out_d, out_arg, v, zn, zd):
    # Lower envelope of parabolas w*(x-q)^2 + f[q]. Breakpoints are kept as
    # fractions zn/zd so that integer inputs compare exactly; ties resolve to
    # the lowest q.
    n = f.shape[0]
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            continue
        while True:
            p = v[k]
            num = (fq + w * q * q) - (f[p] + w * p * p)
            den = 2.0 * w * (q - p)
            if k > 0 and num * zd[k] <= zn[k] * den:
                k -= 1
                continue
            break
        k += 1
        v[k] = q
        zn[k] = num
        zd[k] = den
    if k < 0:
        for x in range(n):
            out_d[x] = np.inf
            out_arg[x] = -1
        return
    j = 0
    for x in range(n):
        while j < k and zn[j + 1] < x * zd[j + 1]:
            j += 1
        q = v[j]
        out_d[x] = w * (x - q) * (x - q) + f[q]
        out_arg[x] = q


@numba.njit(parallel=True, cache=True)
def _edt_pass(sq, near, axis, w, track):
    nx, ny, nz = sq.shape
    n = sq.shape[axis]
    if axis == 0:
        a_len, b_len = ny, nz
    elif axis == 1:
        a_len, b_len = nx, nz
    else:
        a_len, b_len = nx, ny
    for b in numba.prange(b_len):
        f = np.empty(n, np.float64)
        d = np.empty(n, np.float64)
        arg = np.empty(n, np.int64)
        nl = np.empty(n, np.int64)
        v = np.empty(n, np.int64)
        zn = np.empty(n + 1, np.float64)
        zd = np.empty(n + 1, np.float64)
        for a in range(a_len):
            for t in range(n):
                if axis == 0:
                    f[t] = sq[t, a, b]
                    if track:
                        nl[t] = near[t, a, b]
                elif axis == 1:
                    f[t] = sq[a, t, b]
                    if track:
                        nl[t] = near[a, t, b]
                else:
                    f[t] = sq[a, b, t]
                    if track:
                        nl[t] = near[a, b, t]
            _envelope_1d(f, w, d, arg, v, zn, zd)
            for t in range(n):
                if axis == 0:
                    sq[t, a, b] = d[t]
                    if track:
                        near[t, a, b] = nl[arg[t]] if arg[t] >= 0 else -1
                elif axis == 1:
                    sq[a, t, b] = d[t]
                    if track:
                        near[a, t, b] = nl[arg[t]] if arg[t] >= 0 else -1
                else:
                    sq[a, b, t] = d[t]
                    if track:
                        near[a, b, t] = nl[arg[t]] if arg[t] >= 0 else -1


def squared_edt(feature: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0),
                return_nearest: bool = True):
    """Exact squared distance (physical units²) from each voxel to ``feature``.

    Works on a raw boolean array; returns ``(sq, nearest)`` where ``nearest`` is
    ``None`` if not requested. Voxels of an empty feature set get ``inf``.
    """
    feature = np.asarray(feature, dtype=bool)
    uniform = spacing[0] == spacing[1] == spacing[2]
    weights = (1.0, 1.0, 1.0) if uniform else tuple(float(s) ** 2 for s in spacing)
    sq = np.where(feature, 0.0, np.inf)
    sq = np.ascontiguousarray(sq)
    nx, ny, _ = feature.shape
    if return_nearest:
        lin = np.arange(feature.size, dtype=np.int64).reshape(feature.shape, order="F")
        near = np.where(feature, lin, -1).astype(np.int64)
        near = np.ascontiguousarray(near)
    else:
        near = np.empty((1, 1, 1), dtype=np.int64)
    for axis in range(3):
        _edt_pass(sq, near, axis, weights[axis], return_nearest)
    if uniform and spacing[0] != 1.0:
        sq *= float(spacing[0]) ** 2
    return sq, (near if return_nearest else None)


def distance_transform(feature: BinaryMask, return_nearest: bool = True) -> DistanceField:
    """Distance from every voxel to its nearest ``feature`` voxel.

    Ties between equidistant features resolve to the lowest linear index.
    """
    if not feature.membership.any():
        raise EmptyFeatureSet("distance transform needs at least one feature voxel")
    sq, near = squared_edt(feature.membership, feature.spacing, return_nearest)
    return DistanceField(sq_distance=sq, spacing=feature.spacing, nearest=near)


def physical_distance(a: Sequence[float], b: Sequence[float], spacing: Spacing) -> float:
    d = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) * np.asarray(spacing)
    return float(np.sqrt(np.dot(d, d)))
