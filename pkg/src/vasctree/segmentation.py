"""Seeded region growing and connected-component counting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy import ndimage

from .errors import BoundsError, InvalidParameter, SeedOutsideRange
from .volume import BinaryMask, Volume3D, VoxelIndex, in_bounds, offsets, structure

# Attenuation thresholds in [1000/cm] used for the renal-artery specimens.
VESSEL_LO = 1500.0
TISSUE_LO = 600.0
TISSUE_HI = 1200.0


@dataclass(frozen=True)
class GrowParams:
    lo: float
    hi: float = math.inf
    seed: Optional[VoxelIndex] = None
    conn: int = 26

    def __post_init__(self):
        hi = math.inf if self.hi is None else float(self.hi)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", hi)
        if self.lo > hi:
            raise InvalidParameter(f"lo ({self.lo}) must not exceed hi ({hi})")
        offsets(self.conn)  # validates
        if self.seed is not None:
            object.__setattr__(self, "seed", tuple(int(c) for c in self.seed))

    def with_seed(self, seed: VoxelIndex) -> "GrowParams":
        return GrowParams(self.lo, self.hi, seed, self.conn)


def vessel_preset(seed: Optional[VoxelIndex] = None, conn: int = 26) -> GrowParams:
    return GrowParams(VESSEL_LO, math.inf, seed, conn)


def tissue_preset(seed: Optional[VoxelIndex] = None, conn: int = 6) -> GrowParams:
    return GrowParams(TISSUE_LO, TISSUE_HI, seed, conn)


PRESETS = {"vessel": vessel_preset, "tissue": tissue_preset}


def in_range(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (values >= lo) & (values <= hi)


@numba.njit(cache=True)
def _flood(candidate, seed, offs):
    nx, ny, nz = candidate.shape
    out = np.zeros(candidate.shape, dtype=np.bool_)
    stack = np.empty((candidate.sum(), 3), dtype=np.int64)
    top = 0
    out[seed[0], seed[1], seed[2]] = True
    stack[0, 0] = seed[0]
    stack[0, 1] = seed[1]
    stack[0, 2] = seed[2]
    top = 1
    while top > 0:
        top -= 1
        i = stack[top, 0]
        j = stack[top, 1]
        k = stack[top, 2]
        for o in range(offs.shape[0]):
            a = i + offs[o, 0]
            b = j + offs[o, 1]
            c = k + offs[o, 2]
            if a < 0 or b < 0 or c < 0 or a >= nx or b >= ny or c >= nz:
                continue
            if candidate[a, b, c] and not out[a, b, c]:
                out[a, b, c] = True
                stack[top, 0] = a
                stack[top, 1] = b
                stack[top, 2] = c
                top += 1
    return out


def region_grow(vol: Volume3D, p: GrowParams) -> BinaryMask:
    """Connected component of ``{lo <= value <= hi}`` containing ``p.seed``."""
    if p.seed is None:
        raise InvalidParameter("region growing needs a seed voxel")
    if not in_bounds(p.seed, vol.dims):
        raise BoundsError(f"seed {p.seed} outside grid {vol.dims}")
    v = vol.values[p.seed]
    if not (p.lo <= v <= p.hi):
        raise SeedOutsideRange(f"seed {p.seed} has value {v}, outside [{p.lo}, {p.hi}]")
    cand = np.ascontiguousarray(in_range(vol.values, p.lo, p.hi))
    grown = _flood(cand, np.array(p.seed, dtype=np.int64), offsets(p.conn))
    return BinaryMask(grown, vol.spacing)


def label(mask, conn: int = 26):
    arr = mask.membership if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    return ndimage.label(arr, structure=structure(conn))


def count_components(mask, conn: int = 26) -> int:
    return int(label(mask, conn)[1])


def largest_component(mask: BinaryMask, conn: int = 26) -> BinaryMask:
    """Largest connected component; ties go to the component met first in x-fastest order."""
    labels, n = label(mask, conn)
    if n == 0:
        return mask
    flat = labels.ravel(order="F")
    sizes = np.bincount(flat, minlength=n + 1)[1:]
    first = np.full(n, flat.size)
    nz = np.flatnonzero(flat)
    np.minimum.at(first, flat[nz] - 1, nz)
    best = min(range(n), key=lambda c: (-sizes[c], first[c])) + 1
    return BinaryMask(labels == best, mask.spacing)
