"""Synthetic bifurcating vessel trees with exact ground truth.

A phantom is a binary tree of straight segments. Each segment is rendered as a
capsule (cylinder with hemispherical caps) of the segment's diameter; a voxel is
lumen when its centre lies inside any capsule.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidSpec, SelfIntersection, TreeOutOfBounds
from .volume import DEFAULT_SPACING_UM, Volume3D

MURRAY_RATIO = 2.0 ** (-1.0 / 3.0)
LUMEN_VALUE = 6000
TISSUE_VALUE = 900
BACKGROUND_VALUE = 0


@dataclass(frozen=True)
class PhantomSpec:
    generations: int = 4
    d0_um: float = 240.0
    length0_um: float = 1000.0
    ratio: float = MURRAY_RATIO
    ratio2: Optional[float] = None
    length_ratio: float = 0.8
    angles_deg: tuple[float, float] = (40.0, 40.0)
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if self.ratio2 is None:
            object.__setattr__(self, "ratio2", self.ratio)
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        if int(self.generations) != self.generations or self.generations < 1:
            raise InvalidSpec(f"generations must be an integer >= 1, got {self.generations}")
        for name in ("ratio", "ratio2"):
            r = getattr(self, name)
            if not 0.0 < r < 1.0:
                raise InvalidSpec(f"{name} must lie in (0, 1), got {r}")
        if self.d0_um <= 0 or self.length0_um <= 0 or self.length_ratio <= 0:
            raise InvalidSpec("d0_um, length0_um and length_ratio must be positive")
        if len(self.angles_deg) != 2 or not all(0 <= a < 90 for a in self.angles_deg):
            raise InvalidSpec("angles_deg must be two half-angles in [0, 90)")
        if not 0.0 <= self.jitter < 1.0:
            raise InvalidSpec("jitter must lie in [0, 1)")

    @property
    def symmetric(self) -> bool:
        return self.ratio == self.ratio2


@dataclass(frozen=True)
class TruthSegment:
    id: int
    parent: Optional[int]
    generation: int
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    diameter: float
    length: float

    @property
    def radius(self) -> float:
        return self.diameter / 2.0


@dataclass(frozen=True)
class GroundTruth:
    spec: PhantomSpec
    segments: tuple[TruthSegment, ...]
    expected_gamma: Optional[float] = None

    @property
    def root(self) -> TruthSegment:
        return self.segments[0]

    def children(self, seg_id: int) -> list[TruthSegment]:
        return [s for s in self.segments if s.parent == seg_id]

    @property
    def leaves(self) -> list[TruthSegment]:
        parents = {s.parent for s in self.segments}
        return [s for s in self.segments if s.id not in parents]

    def generation_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.segments:
            out[s.generation] = out.get(s.generation, 0) + 1
        return out

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds (µm) of the union of capsules."""
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for s in self.segments:
            for p in (s.start, s.end):
                lo = np.minimum(lo, np.asarray(p) - s.radius)
                hi = np.maximum(hi, np.asarray(p) + s.radius)
        return lo, hi

    def translated(self, shift: Sequence[float]) -> "GroundTruth":
        shift = np.asarray(shift, dtype=float)
        segs = tuple(
            replace(s, start=tuple((np.asarray(s.start) + shift).tolist()),
                    end=tuple((np.asarray(s.end) + shift).tolist()))
            for s in self.segments
        )
        return replace(self, segments=segs)

    def rotated(self, matrix) -> "GroundTruth":
        """Rigid rotation about the root's start point."""
        R = np.asarray(matrix, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise InvalidSpec("rotation must be an orthogonal 3x3 matrix")
        o = np.asarray(self.root.start)
        segs = tuple(
            replace(s, start=tuple((R @ (np.asarray(s.start) - o) + o).tolist()),
                    end=tuple((R @ (np.asarray(s.end) - o) + o).tolist()))
            for s in self.segments
        )
        return replace(self, segments=segs)

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "expected_gamma": self.expected_gamma,
            "segments": [asdict(s) for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        spec = d["spec"]
        spec = PhantomSpec(**{**spec, "angles_deg": tuple(spec["angles_deg"])})
        segs = tuple(
            TruthSegment(**{**s, "start": tuple(s["start"]), "end": tuple(s["end"])})
            for s in d["segments"]
        )
        return cls(spec, segs, d.get("expected_gamma"))


def expected_gamma(ratio: float) -> float:
    """Cumulative-diameter exponent of a symmetric binary tree with diameter ratio ``ratio``."""
    return math.log(2.0) / math.log(1.0 / ratio)


def _unit(v):
    return v / np.linalg.norm(v)


def segment_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between segments p0-p1 and q0-q1."""
    p0, p1, q0, q1 = (np.asarray(x, dtype=float) for x in (p0, p1, q0, q1))
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    eps = 1e-12
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= eps:
            t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm((p0 + d1 * s) - (q0 + d2 * t)))


def _segment_distances(p0, p1, q0, q1) -> np.ndarray:
    """Vectorised ``segment_distance`` over rows of (n, 3) arrays."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    b = np.einsum("ij,ij->i", d1, d2)
    c = np.einsum("ij,ij->i", d1, r)
    f = np.einsum("ij,ij->i", d2, r)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-12, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
        low, high = t < 0.0, t > 1.0
        s = np.where(low, np.clip(-c / a, 0.0, 1.0), s)
        s = np.where(high, np.clip((b - c) / a, 0.0, 1.0), s)
        t = np.clip(t, 0.0, 1.0)
        point_a, point_b = a <= 1e-12, e <= 1e-12
        s = np.where(point_a, 0.0, np.where(point_b, np.clip(-c / a, 0.0, 1.0), s))
        t = np.where(point_b, 0.0, np.where(point_a, np.clip(f / e, 0.0, 1.0), t))
    diff = (p0 + d1 * s[:, None]) - (q0 + d2 * t[:, None])
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _check_intersections(segs: Sequence[TruthSegment]) -> None:
    n = len(segs)
    if n < 3:
        return
    ia, ib = np.triu_indices(n, 1)
    parent = np.array([-1 if s.parent is None else s.parent for s in segs])
    adjacent = (parent[ia] == ib) | (parent[ib] == ia) | ((parent[ia] == parent[ib]) & (parent[ia] >= 0))
    ia, ib = ia[~adjacent], ib[~adjacent]
    start = np.array([s.start for s in segs])
    end = np.array([s.end for s in segs])
    rad = np.array([s.radius for s in segs])
    gap = _segment_distances(start[ia], end[ia], start[ib], end[ib])
    bad = np.flatnonzero(gap < rad[ia] + rad[ib])
    if len(bad):
        a, b = segs[ia[bad[0]]], segs[ib[bad[0]]]
        g = gap[bad[0]]
        raise SelfIntersection(
            f"segments {a.id} and {b.id} are {g:.1f} um apart, "
            f"closer than the sum of their radii ({a.radius + b.radius:.1f} um)"
        )


def generate(spec: PhantomSpec) -> GroundTruth:
    """Analytic binary tree rooted at the origin and growing along +z.

    Each segment branches in the plane spanned by its direction and a reference
    vector; the children's reference vector is rotated a quarter turn, so
    successive bifurcation planes are orthogonal.
    """
    rng = np.random.default_rng(spec.seed)
    th1, th2 = (math.radians(a) for a in spec.angles_deg)

    def jit():
        return 1.0 + spec.jitter * rng.uniform(-1.0, 1.0) if spec.jitter else 1.0

    segs: list[TruthSegment] = []
    # (parent id, generation, start, direction, reference, nominal d, nominal L)
    queue = [(None, 1, np.zeros(3), np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]),
              spec.d0_um, spec.length0_um)]
    while queue:
        parent, gen, start, direction, ref, d_nom, l_nom = queue.pop(0)
        d = d_nom * jit()
        length = l_nom * jit()
        end = start + direction * length
        sid = len(segs)
        segs.append(TruthSegment(sid, parent, gen, tuple(start.tolist()), tuple(end.tolist()),
                                 float(d), float(length)))
        if gen == spec.generations:
            continue
        a1, a2 = th1 * jit(), th2 * jit()
        child_ref = _unit(np.cross(direction, ref))
        c1 = _unit(math.cos(a1) * direction + math.sin(a1) * ref)
        c2 = _unit(math.cos(a2) * direction - math.sin(a2) * ref)
        l_child = l_nom * spec.length_ratio
        queue.append((sid, gen + 1, end, c1, child_ref, d_nom * spec.ratio, l_child))
        queue.append((sid, gen + 1, end, c2, child_ref, d_nom * spec.ratio2, l_child))
    _check_intersections(segs)
    gamma = expected_gamma(spec.ratio) if spec.symmetric else None
    return GroundTruth(spec, tuple(segs), gamma)


def grid_extent(dims, spacing) -> np.ndarray:
    """Physical coordinate (µm) of the last voxel centre along each axis."""
    return (np.asarray(dims) - 1) * np.asarray(spacing, dtype=float)


def fit_to_grid(gt: GroundTruth, dims, spacing=DEFAULT_SPACING_UM) -> GroundTruth:
    """Translate the tree so its capsule bounds are centred in the grid."""
    lo, hi = gt.bounds()
    extent = grid_extent(dims, spacing)
    if np.any(hi - lo > extent):
        raise TreeOutOfBounds(
            f"tree spans {np.round(hi - lo, 1).tolist()} um but the grid only {extent.tolist()} um"
        )
    shift = (extent - (hi - lo)) / 2.0 - lo
    # Keep the shift on the voxel lattice so rasterisation is reproducible.
    shift = np.round(shift / np.asarray(spacing)) * np.asarray(spacing)
    return gt.translated(shift)


def point_segment_sq(points: np.ndarray, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    ap = points - a
    denom = ab @ ab
    t = np.zeros(points.shape[:-1]) if denom == 0 else np.clip((ap @ ab) / denom, 0.0, 1.0)
    diff = ap - t[..., None] * ab
    return np.einsum("...i,...i->...", diff, diff)


def lumen_mask(gt: GroundTruth, dims, spacing=DEFAULT_SPACING_UM) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    sp = np.asarray(spacing, dtype=float)
    out = np.zeros(dims, dtype=bool)
    for s in gt.segments:
        lo = np.minimum(s.start, s.end) - s.radius
        hi = np.maximum(s.start, s.end) + s.radius
        i0 = np.maximum(np.ceil(lo / sp).astype(int), 0)
        i1 = np.minimum(np.floor(hi / sp).astype(int), np.asarray(dims) - 1)
        if np.any(i1 < i0):
            continue
        axes = [np.arange(i0[a], i1[a] + 1) * sp[a] for a in range(3)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        inside = point_segment_sq(pts, s.start, s.end) <= s.radius ** 2
        out[i0[0]:i1[0] + 1, i0[1]:i1[1] + 1, i0[2]:i1[2] + 1] |= inside
    return out


def tissue_envelope(gt: GroundTruth, dims, spacing=DEFAULT_SPACING_UM, margin_um: float = 100.0) -> np.ndarray:
    sp = np.asarray(spacing, dtype=float)
    lo, hi = gt.bounds()
    i0 = np.maximum(np.ceil((lo - margin_um) / sp).astype(int), 0)
    i1 = np.minimum(np.floor((hi + margin_um) / sp).astype(int), np.asarray(dims) - 1)
    out = np.zeros(tuple(int(d) for d in dims), dtype=bool)
    out[i0[0]:i1[0] + 1, i0[1]:i1[1] + 1, i0[2]:i1[2] + 1] = True
    return out


def rasterize(gt: GroundTruth, dims, spacing=DEFAULT_SPACING_UM, margin_um: float = 100.0) -> Volume3D:
    """Gray-scale volume: lumen 6000, tissue envelope 900, background 0.

    Voxel (i, j, k) has its centre at ``(i*sx, j*sy, k*sz)`` µm in the ground
    truth's coordinate frame.
    """
    lo, hi = gt.bounds()
    extent = grid_extent(dims, spacing)
    if np.any(lo < -1e-9) or np.any(hi > extent + 1e-9):
        raise TreeOutOfBounds(
            f"tree bounds {lo.round(1).tolist()}..{hi.round(1).tolist()} um exceed grid 0..{extent.tolist()} um"
        )
    vals = np.full(tuple(int(d) for d in dims), BACKGROUND_VALUE, dtype=np.uint16)
    vals[tissue_envelope(gt, dims, spacing, margin_um)] = TISSUE_VALUE
    vals[lumen_mask(gt, dims, spacing)] = LUMEN_VALUE
    return Volume3D(vals, spacing)


def root_seed(gt: GroundTruth, spacing=DEFAULT_SPACING_UM) -> tuple[int, int, int]:
    """Voxel nearest the root segment's start point (inside the lumen)."""
    return tuple(int(v) for v in np.round(np.asarray(gt.root.start) / np.asarray(spacing)))


def required_dims(gt: GroundTruth, spacing=DEFAULT_SPACING_UM, margin_um: float = 100.0,
                  pad_voxels: int = 2) -> tuple[int, int, int]:
    """Smallest grid that holds the tree plus the tissue margin."""
    lo, hi = gt.bounds()
    size = (hi - lo + 2 * margin_um) / np.asarray(spacing)
    return tuple(int(v) for v in np.ceil(size) + 1 + 2 * pad_voxels)
