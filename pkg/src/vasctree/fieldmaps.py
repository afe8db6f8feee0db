"""Local-diameter and perfusion maps, perfusion histograms and cross-specimen
aggregation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyFeatureSet, GridMismatch, InvalidParameter
from .skeleton import Skeleton
from .volume import BinaryMask, Volume3D, squared_edt

SENTINEL = -1.0
DEFAULT_BIN_WIDTH_UM = 20.0


def _masked_distance(feature: np.ndarray, region: np.ndarray, spacing) -> Volume3D:
    sq, _ = squared_edt(feature, spacing, return_nearest=False)
    out = np.full(feature.shape, SENTINEL, dtype=np.float32)
    out[region] = np.sqrt(sq[region]).astype(np.float32)
    return Volume3D(out, spacing)


def local_diameter_map(vessel: BinaryMask, skel: Skeleton) -> Volume3D:
    """Distance (µm) from each vessel voxel to the nearest centreline voxel;
    ``SENTINEL`` outside the vessel."""
    if not vessel.same_grid(skel.mask):
        raise GridMismatch("vessel mask and skeleton are on different grids")
    if not skel.membership.any():
        raise EmptyFeatureSet("skeleton is empty")
    if (skel.membership & ~vessel.membership).any():
        raise InvalidParameter("skeleton is not contained in the vessel mask")
    return _masked_distance(skel.membership, vessel.membership, vessel.spacing)


def perfusion_map(tissue: BinaryMask, vessel: BinaryMask) -> Volume3D:
    """Distance (µm) from each tissue voxel to the nearest vessel voxel;
    ``SENTINEL`` outside the tissue."""
    if not tissue.same_grid(vessel):
        raise GridMismatch("tissue and vessel masks are on different grids")
    if not vessel.membership.any():
        raise EmptyFeatureSet("vessel mask is empty")
    return _masked_distance(vessel.membership, tissue.membership, tissue.spacing)


@dataclass(frozen=True, eq=False)
class PerfusionHistogram:
    """Counts in bins ``[i*w, (i+1)*w)`` µm, i = 0..len(counts)-1."""

    bin_width: float
    counts: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.arange(len(self.counts) + 1) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        t = self.total
        return self.counts / t if t else np.zeros(len(self.counts))


def perfusion_histogram(pmap: Volume3D, bin_width: float = DEFAULT_BIN_WIDTH_UM) -> PerfusionHistogram:
    if not bin_width > 0:
        raise InvalidParameter(f"bin width must be positive, got {bin_width}")
    vals = np.asarray(pmap.values, dtype=np.float64)
    vals = vals[vals >= 0]
    if vals.size == 0:
        return PerfusionHistogram(float(bin_width), np.zeros(0, dtype=np.int64))
    idx = np.floor(vals / bin_width).astype(np.int64)
    return PerfusionHistogram(float(bin_width), np.bincount(idx).astype(np.int64))


@dataclass(frozen=True, eq=False)
class SpecimenAggregate:
    bin_width: float
    mean: np.ndarray
    std: np.ndarray
    n_specimens: int

    @property
    def edges(self) -> np.ndarray:
        return np.arange(len(self.mean) + 1) * self.bin_width


def aggregate_specimens(histograms: Sequence[PerfusionHistogram]) -> SpecimenAggregate:
    """Per-bin mean and sample standard deviation of normalised frequencies.

    Histograms must share a bin width; shorter ones are padded with empty bins
    up to the longest, since all grids start at zero.
    """
    if not histograms:
        raise InvalidParameter("need at least one histogram")
    widths = {h.bin_width for h in histograms}
    if len(widths) != 1:
        raise GridMismatch(f"histograms use different bin widths: {sorted(widths)}")
    n_bins = max(len(h.counts) for h in histograms)
    freq = np.zeros((len(histograms), n_bins))
    for i, h in enumerate(histograms):
        freq[i, :len(h.counts)] = h.frequencies
    mean = freq.mean(axis=0)
    std = freq.std(axis=0, ddof=1) if len(histograms) > 1 else np.zeros(n_bins)
    return SpecimenAggregate(widths.pop(), mean, std, len(histograms))
