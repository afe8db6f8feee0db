"""End-to-end run: segment -> skeletonize -> tree -> stats -> maps.

Configuration precedence (lowest to highest): ``PipelineConfig`` defaults, the
JSON config file, explicit command-line flags.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import (GridMismatch, InsufficientData, InvalidParameter, StageError,
                     VasctreeError)
from .fieldmaps import (SENTINEL, PerfusionHistogram, SpecimenAggregate, aggregate_specimens,
                        local_diameter_map, perfusion_histogram, perfusion_map)
from .io import (read_csv, read_header, read_volume, sha256_file, write_csv, write_json,
                 write_mask, write_volume)
from .segmentation import (TISSUE_HI, TISSUE_LO, VESSEL_LO, GrowParams, in_range,
                           largest_component, region_grow)
from .skeleton import Skeleton, thin
from .stats import (CumulativeDistribution, GenerationRow, MurrayResult, PowerLawFit,
                    cumulative_distribution, fit_power_law, generation_stats, murray_exponents)
from .tree import (CenterlineGraph, Segment, VesselTree, build_graph, measure, prune,
                   retract_tips, root_tree)
from .volume import BinaryMask, DistanceField, Volume3D, distance_transform

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SEGMENT_COLUMNS = ("id", "parent_id", "generation", "length_um", "diameter_um", "n_voxels")
GENSTATS_COLUMNS = ("generation", "count", "diam_mean", "diam_std", "len_mean", "len_std")
CUMULATIVE_COLUMNS = ("d_um", "N")
MURRAY_COLUMNS = ("node_id", "d_parent", "d_child1", "d_child2", "k", "defined")
HIST_COLUMNS = ("bin_lo_um", "bin_hi_um", "count", "freq")
AGGREGATE_COLUMNS = ("bin_lo_um", "bin_hi_um", "mean_freq", "std_freq")

Index3 = Optional[tuple[int, int, int]]


@dataclass
class PipelineConfig:
    input: str = ""
    output_dir: str = "vasctree_out"
    name: str = "specimen"
    spacing_um: Optional[tuple[float, float, float]] = None  # None: take it from the header
    vessel_lo: float = VESSEL_LO
    vessel_hi: float = math.inf
    vessel_seed: Index3 = None  # None: brightest voxel
    vessel_conn: int = 26
    tissue_lo: float = TISSUE_LO
    tissue_hi: float = TISSUE_HI
    tissue_seed: Index3 = None  # None: largest in-range component
    tissue_conn: int = 6
    root_hint: Index3 = None  # None: widest centreline endpoint
    prune_factor: float = 1.0
    fit_window: Optional[tuple[float, float]] = None
    bin_width_um: float = 20.0
    maps: bool = True
    threads: int = 0

    def __post_init__(self):
        for name in ("vessel_seed", "tissue_seed", "root_hint", "spacing_um", "fit_window"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, tuple(v))
        if self.prune_factor < 0:
            raise InvalidParameter("prune_factor must be >= 0")
        if not self.bin_width_um > 0:
            raise InvalidParameter("bin_width_um must be positive")
        if self.threads < 0:
            raise InvalidParameter("threads must be >= 0")

    @classmethod
    def from_json(cls, path, **overrides) -> "PipelineConfig":
        data = json.loads(Path(path).read_text()) if path else {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
        if data.get("vessel_hi") is None:
            data.pop("vessel_hi", None)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vessel_hi"] = None if math.isinf(self.vessel_hi) else self.vessel_hi
        return d


@dataclass
class RunManifest:
    tool: str = "vasctree"
    version: str = __version__
    schema_version: int = SCHEMA_VERSION
    config: dict = field(default_factory=dict)
    input_sha256: str = ""
    threads: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    status: str = "running"
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# thread control
# ---------------------------------------------------------------------------

def set_threads(n: int) -> dict:
    """Apply a thread count to the numba kernels (0 = all available).

    Requests above the process limit are clamped; results never depend on it.
    """
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    used = limit if n == 0 else min(int(n), limit)
    numba.set_num_threads(used)
    return {"requested": int(n), "used": used}


# ---------------------------------------------------------------------------
# stages on in-memory data
# ---------------------------------------------------------------------------

def brightest_voxel(vol: Volume3D) -> tuple[int, int, int]:
    """Voxel of maximal value, first in x-fastest order among ties."""
    lin = int(np.argmax(vol.values.ravel(order="F")))
    nx, ny, _ = vol.dims
    return (lin % nx, (lin // nx) % ny, lin // (nx * ny))


def segment_vessel(vol: Volume3D, cfg: PipelineConfig) -> BinaryMask:
    seed = cfg.vessel_seed if cfg.vessel_seed is not None else brightest_voxel(vol)
    return region_grow(vol, GrowParams(cfg.vessel_lo, cfg.vessel_hi, seed, cfg.vessel_conn))


def segment_tissue(vol: Volume3D, cfg: PipelineConfig) -> Optional[BinaryMask]:
    if cfg.tissue_seed is not None:
        return region_grow(vol, GrowParams(cfg.tissue_lo, cfg.tissue_hi, cfg.tissue_seed, cfg.tissue_conn))
    cand = BinaryMask(in_range(vol.values, cfg.tissue_lo, cfg.tissue_hi), vol.spacing)
    if not cand.membership.any():
        return None
    return largest_component(cand, cfg.tissue_conn)


def radius_field(vessel: BinaryMask) -> DistanceField:
    """Distance from each vessel voxel to the nearest non-vessel voxel."""
    return distance_transform(BinaryMask(~vessel.membership, vessel.spacing), return_nearest=False)


def widest_endpoint(graph: CenterlineGraph, edt: DistanceField) -> tuple[int, int, int]:
    """Endpoint whose terminal branch has the largest median radius.

    The inlet of a perfused tree is its widest free end. Ties go to the lowest
    linear index.
    """
    ends = graph.nodes_of_kind("endpoint")
    if not ends:
        return (0, 0, 0)  # root_tree raises NoRootCandidate
    nx, ny, _ = graph.dims

    def key(n):
        paths = [e.path for e in graph.edges if n.id in (e.u, e.v)]
        r = max((float(np.median(edt.sq_distance[tuple(p.T)])) for p in paths), default=0.0)
        return (-r, n.rep[0] + nx * (n.rep[1] + ny * n.rep[2]))

    return tuple(int(v) for v in min(ends, key=key).rep)


def extract_tree(vessel: BinaryMask, skel: Skeleton, root_hint: Index3 = None,
                 prune_factor: float = 1.0) -> VesselTree:
    edt = radius_field(vessel)
    graph = build_graph(skel)
    hint = root_hint if root_hint is not None else widest_endpoint(graph, edt)
    tree = root_tree(graph, hint, edt)
    tree = prune(tree, edt, prune_factor)
    return measure(retract_tips(tree, edt), edt)


@dataclass(frozen=True, eq=False)
class TreeStats:
    generations: list[GenerationRow]
    cumulative: CumulativeDistribution
    murray: list[MurrayResult]
    power_law: Optional[PowerLawFit]
    warnings: tuple[str, ...] = ()


def tree_stats(tree: VesselTree, window: Optional[Sequence[float]] = None) -> TreeStats:
    warnings = []
    try:
        fit = fit_power_law(cumulative_distribution(tree), window)
    except InsufficientData as exc:
        fit = None
        warnings.append(f"power-law fit skipped: {exc}")
    return TreeStats(generation_stats(tree), cumulative_distribution(tree), murray_exponents(tree),
                     fit, tuple(warnings))


# ---------------------------------------------------------------------------
# table writers / readers
# ---------------------------------------------------------------------------

def write_segments(tree: VesselTree, path) -> None:
    write_csv(path, SEGMENT_COLUMNS,
              ((s.id, s.parent, s.generation, s.length, s.diameter, s.n_voxels) for s in tree.segments))


def read_segments(path, spacing=(20.0, 20.0, 20.0)) -> VesselTree:
    """Segments CSV back to a tree (centreline paths are not stored)."""
    segs = []
    for row in read_csv(path):
        parent = int(row["parent_id"]) if row["parent_id"] else None
        diam = float(row["diameter_um"]) if row["diameter_um"] else None
        segs.append(Segment(int(row["id"]), parent, np.zeros((0, 3), dtype=np.int64),
                            int(row["generation"]), float(row["length_um"]), diam))
    segs.sort(key=lambda s: s.id)
    if not segs:
        raise InsufficientData(f"{path}: no segments")
    roots = [s.id for s in segs if s.parent is None]
    if len(roots) != 1:
        raise InvalidParameter(f"{path}: expected one root segment, found {len(roots)}")
    return VesselTree(tuple(segs), tuple(spacing), (0, 0, 0), roots[0])


def write_stats(st: TreeStats, prefix: str) -> list[str]:
    paths = [f"{prefix}_genstats.csv", f"{prefix}_cumulative.csv", f"{prefix}_murray.csv",
             f"{prefix}_powerlaw.json"]
    write_csv(paths[0], GENSTATS_COLUMNS,
              ((r.generation, r.count, r.diam_mean, r.diam_std, r.len_mean, r.len_std)
               for r in st.generations))
    write_csv(paths[1], CUMULATIVE_COLUMNS, zip(st.cumulative.diameters, st.cumulative.counts))
    write_csv(paths[2], MURRAY_COLUMNS,
              ((m.node_id, m.d_parent, m.d_child1, m.d_child2, m.k, m.defined) for m in st.murray))
    fit = st.power_law
    write_json(paths[3], {
        "gamma": fit.gamma if fit else None,
        "r2": fit.r2 if fit else None,
        "window": list(fit.window) if fit else None,
        "n_points": fit.n_points if fit else 0,
    })
    return paths


def write_histogram(hist: PerfusionHistogram, path) -> None:
    edges, freq = hist.edges, hist.frequencies
    write_csv(path, HIST_COLUMNS,
              ((edges[i], edges[i + 1], hist.counts[i], freq[i]) for i in range(len(hist.counts))))


def read_histogram(path) -> PerfusionHistogram:
    rows = read_csv(path)
    if not rows:
        raise InsufficientData(f"{path}: empty histogram")
    lo = np.array([float(r["bin_lo_um"]) for r in rows])
    hi = np.array([float(r["bin_hi_um"]) for r in rows])
    w = hi[0] - lo[0]
    if lo[0] != 0 or not np.allclose(hi - lo, w) or not np.allclose(lo, np.arange(len(lo)) * w):
        raise GridMismatch(f"{path}: bins are not a uniform grid starting at 0")
    return PerfusionHistogram(float(w), np.array([int(r["count"]) for r in rows], dtype=np.int64))


def write_aggregate(agg: SpecimenAggregate, path) -> None:
    e = agg.edges
    write_csv(path, AGGREGATE_COLUMNS,
              ((e[i], e[i + 1], agg.mean[i], agg.std[i]) for i in range(len(agg.mean))))


def write_map(vol: Volume3D, path) -> None:
    write_volume(vol, path, "f32", {"kind": "map", "sentinel": SENTINEL})


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

class _Stage:
    def __init__(self, name: str, manifest: RunManifest):
        self.name, self.manifest = name, manifest

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, exc, tb):
        self.manifest.timings_s[self.name] = round(time.perf_counter() - self.t0, 6)
        if isinstance(exc, Exception) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


@dataclass(frozen=True, eq=False)
class RunResult:
    manifest: RunManifest
    vessel: BinaryMask
    tissue: Optional[BinaryMask]
    skeleton: Skeleton
    tree: VesselTree
    stats: TreeStats
    histogram: Optional[PerfusionHistogram]


def run_pipeline(cfg: PipelineConfig) -> RunResult:
    """Run every stage, writing outputs under ``cfg.output_dir`` as ``<name>_*``.

    A failing stage raises ``StageError`` naming it; outputs of completed stages
    stay on disk and the manifest records the failure.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = str(out / cfg.name)
    man = RunManifest(config=cfg.to_dict())
    man.threads = set_threads(cfg.threads)
    man_path = f"{prefix}_manifest.json"

    def emit(*paths):
        man.outputs.extend(Path(p).name for p in paths)

    try:
        with _Stage("read", man):
            vol = read_volume(cfg.input)
            man.input_sha256 = sha256_file(Path(cfg.input).parent / read_header(cfg.input)["data"])
            if cfg.spacing_um is not None:
                vol = Volume3D(vol.values, cfg.spacing_um)

        with _Stage("segment", man):
            vessel = segment_vessel(vol, cfg)
            tissue = segment_tissue(vol, cfg) if cfg.maps else None
            write_mask(vessel, f"{prefix}_vessel.json")
            emit(f"{prefix}_vessel.json", f"{prefix}_vessel.raw")
            if tissue is not None:
                write_mask(tissue, f"{prefix}_tissue.json")
                emit(f"{prefix}_tissue.json", f"{prefix}_tissue.raw")
            man.summary["vessel_voxels"] = vessel.count
            man.summary["tissue_voxels"] = tissue.count if tissue is not None else 0

        with _Stage("skeletonize", man):
            skel = thin(vessel)
            write_mask(skel.mask, f"{prefix}_skeleton.json")
            emit(f"{prefix}_skeleton.json", f"{prefix}_skeleton.raw")
            man.summary["skeleton_voxels"] = skel.mask.count

        with _Stage("tree", man):
            tree = extract_tree(vessel, skel, cfg.root_hint, cfg.prune_factor)
            man.warnings.extend(tree.warnings)
            write_segments(tree, f"{prefix}_segments.csv")
            emit(f"{prefix}_segments.csv")
            man.summary["segments"] = len(tree)
            man.summary["generation_counts"] = {str(k): v for k, v in tree.generation_counts().items()}

        with _Stage("stats", man):
            st = tree_stats(tree, cfg.fit_window)
            man.warnings.extend(st.warnings)
            emit(*write_stats(st, prefix))
            if st.power_law is not None:
                man.summary["gamma"] = st.power_law.gamma

        hist = None
        if cfg.maps:
            with _Stage("maps", man):
                write_map(local_diameter_map(vessel, skel), f"{prefix}_diam.json")
                emit(f"{prefix}_diam.json", f"{prefix}_diam.raw")
                if tissue is None:
                    man.warnings.append("no tissue voxels in range; perfusion map skipped")
                else:
                    pmap = perfusion_map(tissue, vessel)
                    hist = perfusion_histogram(pmap, cfg.bin_width_um)
                    write_map(pmap, f"{prefix}_perf.json")
                    write_histogram(hist, f"{prefix}_perf_hist.csv")
                    emit(f"{prefix}_perf.json", f"{prefix}_perf.raw", f"{prefix}_perf_hist.csv")
    except StageError as exc:
        man.status, man.error = "failed", str(exc)
        write_json(man_path, man.to_dict())
        raise

    man.status = "ok"
    write_json(man_path, man.to_dict())
    return RunResult(man, vessel, tissue, skel, tree, st, hist)


__all__ = [
    "PipelineConfig", "RunManifest", "RunResult", "TreeStats", "run_pipeline", "extract_tree",
    "segment_vessel", "segment_tissue", "tree_stats", "set_threads", "read_segments",
    "write_segments", "write_stats", "write_histogram", "read_histogram", "write_aggregate",
    "write_map", "aggregate_specimens", "VasctreeError",
]
