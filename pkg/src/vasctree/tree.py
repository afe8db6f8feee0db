"""Centreline graph extraction, rooting, spur pruning and per-segment measurement."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyMask, NoRootCandidate
from .skeleton import Skeleton
from .volume import DistanceField, offsets

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Node:
    id: int
    kind: str  # "endpoint", "junction" or "loop"
    voxels: np.ndarray  # (n, 3)
    rep: tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class Edge:
    id: int
    u: int
    v: int
    interior: np.ndarray  # regular voxels strictly between the two nodes, ordered u -> v
    path: np.ndarray  # rep(u) ... interior ... rep(v)


@dataclass(frozen=True, eq=False)
class CenterlineGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    def degree(self, node_id: int) -> int:
        return sum((e.u == node_id) + (e.v == node_id) for e in self.edges)

    def nodes_of_kind(self, kind: str) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]


@dataclass(frozen=True, eq=False)
class Segment:
    id: int
    parent: Optional[int]
    path: np.ndarray
    generation: int
    length: float
    diameter: Optional[float] = None

    @property
    def n_voxels(self) -> int:
        return len(self.path)


@dataclass(frozen=True, eq=False)
class VesselTree:
    segments: tuple[Segment, ...]
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]
    root: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def children(self, seg_id: int) -> list[Segment]:
        return [s for s in self.segments if s.parent == seg_id]

    @property
    def leaves(self) -> list[Segment]:
        parents = {s.parent for s in self.segments}
        return [s for s in self.segments if s.id not in parents]

    def generation_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.segments:
            out[s.generation] = out.get(s.generation, 0) + 1
        return dict(sorted(out.items()))

    def __len__(self):
        return len(self.segments)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

# Knot spacing (in path voxels) of the polyline used for segment length. Summing
# single 26-neighbour steps overstates the length of an oblique digital line by
# up to ~12%; a polyline through every third voxel keeps that below ~3%.
LENGTH_STRIDE = 3


def arc_length(path: np.ndarray, spacing, stride: int = 1) -> float:
    """Length of the polyline through every ``stride``-th voxel centre of ``path``
    (first and last voxel always included)."""
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        return 0.0
    if stride > 1:
        idx = list(range(0, len(path), stride))
        if idx[-1] != len(path) - 1:
            idx.append(len(path) - 1)
        path = path[idx]
    steps = np.diff(path, axis=0) * np.asarray(spacing, dtype=float)
    return float(np.sqrt((steps ** 2).sum(axis=1)).sum())


def _lin(idx, dims) -> int:
    return int(idx[0]) + dims[0] * (int(idx[1]) + dims[1] * int(idx[2]))


class _PaddedGrid:
    """Linear indexing into the skeleton grid padded by one voxel on every side,
    so that neighbour offsets never leave the array."""

    def __init__(self, dims):
        self.dims = tuple(int(d) + 2 for d in dims)
        nx, ny, _ = self.dims
        self.offs = [int(o[0] + nx * (o[1] + ny * o[2])) for o in offsets(26)]

    def lin(self, ijk) -> int:
        nx, ny, _ = self.dims
        return int(ijk[0] + 1) + nx * (int(ijk[1] + 1) + ny * int(ijk[2] + 1))

    def ijk(self, lin: int) -> tuple[int, int, int]:
        nx, ny, _ = self.dims
        return (lin % nx - 1, (lin // nx) % ny - 1, lin // (nx * ny) - 1)


def _bfs_path(start: int, goal: int, members: set, nbrs) -> list[int]:
    if start == goal:
        return [start]
    prev = {start: None}
    q = deque([start])
    while q:
        a = q.popleft()
        for b in nbrs[a]:
            if b in members and b not in prev:
                prev[b] = a
                if b == goal:
                    out = [b]
                    while prev[out[-1]] is not None:
                        out.append(prev[out[-1]])
                    return out[::-1]
                q.append(b)
    raise RuntimeError("cluster is not connected")


# ---------------------------------------------------------------------------
# graph construction
# ---------------------------------------------------------------------------

def build_graph(skel: Skeleton) -> CenterlineGraph:
    """Split the skeleton into node clusters (endpoints, junction clusters) and
    the voxel paths connecting them."""
    arr = skel.membership
    if not arr.any():
        raise EmptyMask("skeleton is empty")
    grid = _PaddedGrid(arr.shape)
    coords = np.argwhere(arr.transpose(2, 1, 0))[:, ::-1]  # x-fastest order
    voxels = [grid.lin(c) for c in coords]
    vset = set(voxels)
    nbrs = {v: sorted(v + o for o in grid.offs if v + o in vset) for v in voxels}
    spacing = np.asarray(skel.spacing, dtype=float)

    # junction clusters by 26-adjacency
    cluster: dict[int, int] = {}
    n_clusters = 0
    for v in voxels:
        if len(nbrs[v]) < 3 or v in cluster:
            continue
        cluster[v] = n_clusters
        stack = [v]
        while stack:
            a = stack.pop()
            for b in nbrs[a]:
                if len(nbrs[b]) >= 3 and b not in cluster:
                    cluster[b] = n_clusters
                    stack.append(b)
        n_clusters += 1

    # Regular voxels wedged between two voxels of one cluster belong to that cluster.
    changed = True
    while changed:
        changed = False
        for v in voxels:
            if v in cluster or len(nbrs[v]) != 2:
                continue
            a, b = nbrs[v]
            if a in cluster and b in cluster and cluster[a] == cluster[b]:
                cluster[v] = cluster[a]
                changed = True

    members: dict[int, list[int]] = {}
    for v in voxels:
        if v in cluster:
            members.setdefault(cluster[v], []).append(v)

    raw_nodes: list[tuple[str, list[int]]] = [("junction", members[c]) for c in range(n_clusters)]
    raw_nodes += [("endpoint", [v]) for v in voxels if len(nbrs[v]) <= 1]

    def rep_of(vox: list[int]) -> int:
        if len(vox) == 1:
            return vox[0]
        pts = np.array([grid.ijk(v) for v in vox], dtype=float) * spacing
        d2 = ((pts - pts.mean(axis=0)) ** 2).sum(axis=1)
        return vox[int(np.argmin(d2))]  # vox is sorted, so ties go to the lowest index

    raw_nodes.sort(key=lambda n: rep_of(n[1]))
    node_of: dict[int, int] = {}
    node_vox: list[list[int]] = []
    node_kind: list[str] = []
    node_rep: list[int] = []
    for nid, (kind, vox) in enumerate(raw_nodes):
        for v in vox:
            node_of[v] = nid
        node_vox.append(vox)
        node_kind.append(kind)
        node_rep.append(rep_of(vox))

    raw_edges: list[tuple[int, int, list[int], int, int]] = []  # u, v, interior, attach_u, attach_v
    visited: set[int] = set()
    direct: set[tuple[int, int]] = set()

    def trace(start_attach: int, first: int):
        prev, cur = start_attach, first
        interior = [first]
        visited.add(first)
        while True:
            nxt = [n for n in nbrs[cur] if n != prev]
            n = nxt[0]
            if n in node_of:
                return interior, n
            if n in visited:
                return interior, None
            interior.append(n)
            visited.add(n)
            prev, cur = cur, n

    def walk_from(nid: int):
        for a in node_vox[nid]:
            for b in nbrs[a]:
                if b in node_of:
                    if node_of[b] != nid:
                        key = (min(a, b), max(a, b))
                        if key not in direct:
                            direct.add(key)
                            raw_edges.append((nid, node_of[b], [], a, b))
                    continue
                if b in visited:
                    continue
                interior, end = trace(a, b)
                if end is None:  # pragma: no cover - only for corrupted input
                    continue
                raw_edges.append((nid, node_of[end], interior, a, end))

    for nid in range(len(node_vox)):
        walk_from(nid)

    # closed loops of regular voxels with no node on them
    for v in voxels:
        if v in node_of or v in visited:
            continue
        nid = len(node_vox)
        node_of[v] = nid
        node_vox.append([v])
        node_kind.append("loop")
        node_rep.append(v)
        visited.add(v)
        walk_from(nid)

    nodes = tuple(
        Node(nid, node_kind[nid], np.array([grid.ijk(v) for v in node_vox[nid]], dtype=np.int64),
             grid.ijk(node_rep[nid]))
        for nid in range(len(node_vox))
    )
    members_set = [set(vox) for vox in node_vox]
    edges = []
    for eid, (u, v, interior, au, av) in enumerate(raw_edges):
        head = _bfs_path(node_rep[u], au, members_set[u], nbrs)
        tail = _bfs_path(av, node_rep[v], members_set[v], nbrs)
        full = head + interior + tail
        edges.append(Edge(
            eid, u, v,
            np.array([grid.ijk(x) for x in interior], dtype=np.int64).reshape(-1, 3),
            np.array([grid.ijk(x) for x in full], dtype=np.int64),
        ))
    return CenterlineGraph(nodes, tuple(edges), tuple(arr.shape), tuple(skel.spacing))


# ---------------------------------------------------------------------------
# rooting
# ---------------------------------------------------------------------------

def _mean_radius(path: np.ndarray, edt: Optional[DistanceField]) -> float:
    if edt is None:
        return 0.0
    return float(edt.distance[path[:, 0], path[:, 1], path[:, 2]].mean())


def _edge_key(edge: Edge, dims) -> tuple:
    lins = [_lin(p, dims) for p in edge.path]
    if lins[::-1] < lins:
        lins = lins[::-1]
    return tuple(lins)


def root_tree(graph: CenterlineGraph, root_hint: Sequence[float],
              edt: Optional[DistanceField] = None) -> VesselTree:
    """Orient the graph away from the endpoint nearest ``root_hint``.

    Cycles are broken by keeping a maximum spanning tree on the mean distance-
    transform radius of each edge, i.e. the thinnest edge of every cycle is cut.
    """
    dims, spacing = graph.dims, graph.spacing
    ends = graph.nodes_of_kind("endpoint")
    if not ends:
        raise NoRootCandidate("centreline graph has no endpoint to root the tree at")
    hint = np.asarray(root_hint, dtype=float)
    sp = np.asarray(spacing, dtype=float)

    def hint_key(n: Node):
        d = (np.asarray(n.rep, dtype=float) - hint) * sp
        return (float(d @ d), _lin(n.rep, dims))

    root = min(ends, key=hint_key)
    warnings: list[str] = []

    # keep only the component containing the root
    adj: dict[int, list[Edge]] = {n.id: [] for n in graph.nodes}
    for e in graph.edges:
        adj[e.u].append(e)
        if e.v != e.u:
            adj[e.v].append(e)
    comp = {root.id}
    stack = [root.id]
    while stack:
        a = stack.pop()
        for e in adj[a]:
            for b in (e.u, e.v):
                if b not in comp:
                    comp.add(b)
                    stack.append(b)
    edges = [e for e in graph.edges if e.u in comp]
    dropped = len(graph.edges) - len(edges)
    if dropped:
        warnings.append(f"dropped {dropped} edge(s) not connected to the root")

    # maximum spanning tree (Kruskal) on mean radius, canonical tie-breaking
    keyed = sorted(edges, key=lambda e: (-_mean_radius(e.path, edt), _edge_key(e, dims)))
    parent = {n: n for n in comp}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    kept = []
    for e in keyed:
        a, b = find(e.u), find(e.v)
        if a == b:
            rep = graph.nodes[e.u].rep
            warnings.append(
                f"broke cycle at edge near voxel {tuple(int(c) for c in rep)} "
                f"(mean radius {_mean_radius(e.path, edt):.2f} um, {len(e.path)} voxels)"
            )
            log.info(warnings[-1])
            continue
        parent[a] = b
        kept.append(e)

    kadj: dict[int, list[Edge]] = {n: [] for n in comp}
    for e in kept:
        kadj[e.u].append(e)
        kadj[e.v].append(e)

    # breadth-first orientation from the root node
    segs: list[dict] = []
    if not kept:
        segs.append({"parent": None, "path": np.array([root.rep], dtype=np.int64)})
    queue = deque([(root.id, None)])
    seen_edges: set[int] = set()
    while queue:
        nid, parent_seg = queue.popleft()
        out = []
        for e in kadj[nid]:
            if e.id in seen_edges:
                continue
            far = e.v if e.u == nid else e.u
            path = e.path if e.u == nid else e.path[::-1]
            out.append((_lin(graph.nodes[far].rep, dims), tuple(_lin(p, dims) for p in path), e, far, path))
        out.sort(key=lambda t: (t[0], t[1]))
        for _, _, e, far, path in out:
            seen_edges.add(e.id)
            segs.append({"parent": parent_seg, "path": np.array(path, dtype=np.int64)})
            queue.append((far, len(segs) - 1))
    return _assemble(segs, spacing, dims, warnings)


def _assemble(segs: list[dict], spacing, dims, warnings, edt: Optional[DistanceField] = None) -> VesselTree:
    """Merge pass-through chains, renumber breadth-first and recompute
    generations and lengths. ``segs`` entries are dicts with parent index and path."""
    segs = [dict(s) for s in segs]
    alive = [True] * len(segs)
    children: dict[int, list[int]] = {i: [] for i in range(len(segs))}
    for i, s in enumerate(segs):
        if s["parent"] is not None:
            children[s["parent"]].append(i)

    def kids(i):
        return children[i]

    for i in range(len(segs)):
        while alive[i] and len(children[i]) == 1:
            c = children[i][0]
            segs[i]["path"] = np.concatenate([segs[i]["path"], segs[c]["path"][1:]])
            segs[i].pop("diameter", None)
            children[i] = children[c]
            for g in children[c]:
                segs[g]["parent"] = i
            alive[c] = False

    root = next(i for i in range(len(segs)) if alive[i] and segs[i]["parent"] is None)
    order = []
    gen = {root: 1}
    q = deque([root])
    while q:
        i = q.popleft()
        order.append(i)
        for c in kids(i):  # children keep their canonical insertion order
            gen[c] = gen[i] + 1
            q.append(c)
    new_id = {old: new for new, old in enumerate(order)}
    out = []
    for old in order:
        s = segs[old]
        path = s["path"]
        out.append(Segment(
            id=new_id[old],
            parent=None if s["parent"] is None else new_id[s["parent"]],
            path=path,
            generation=gen[old],
            length=arc_length(path, spacing, LENGTH_STRIDE),
            diameter=s.get("diameter"),
        ))
    tree = VesselTree(tuple(out), tuple(spacing), tuple(dims), 0, tuple(warnings))
    if edt is not None:
        tree = measure(tree, edt)
    return tree


# ---------------------------------------------------------------------------
# pruning and measurement
# ---------------------------------------------------------------------------

def _edt_at(edt: DistanceField, p) -> float:
    return float(edt.distance[int(p[0]), int(p[1]), int(p[2])])


def prune(tree: VesselTree, edt: DistanceField, factor: float = 1.0) -> VesselTree:
    """Iteratively drop terminal segments shorter than ``factor`` times the
    distance-transform radius at the junction they hang from. The root is kept."""
    measured = any(s.diameter is not None for s in tree.segments)
    warnings = list(tree.warnings)
    current = tree
    while True:
        parents = {s.parent for s in current.segments}
        doomed = {
            s.id for s in current.segments
            if s.id not in parents and s.parent is not None
            and s.length < factor * _edt_at(edt, s.path[0])
        }
        if not doomed:
            break
        for sid in sorted(doomed):
            s = current.segments[sid]
            warnings.append(
                f"pruned spur of {s.length:.1f} um at voxel {tuple(int(c) for c in s.path[0])}"
            )
        segs = [
            {"parent": s.parent, "path": s.path, "diameter": s.diameter}
            for s in current.segments if s.id not in doomed
        ]
        # remap parent indices after removal
        remap = {s.id: n for n, s in enumerate(x for x in current.segments if x.id not in doomed)}
        for d in segs:
            d["parent"] = None if d["parent"] is None else remap[d["parent"]]
        current = _assemble(segs, tree.spacing, tree.dims, warnings, edt if measured else None)
    if current is tree:
        return tree
    return replace(current, warnings=tuple(warnings))


def _trim_count(cum: np.ndarray, radius: float, cap: int) -> int:
    return min(cap, int(np.count_nonzero(cum < radius)))


def segment_diameter(path: np.ndarray, edt: DistanceField, start_is_tip: bool, end_is_tip: bool) -> float:
    """Twice the mean distance-transform value over the middle of the path.

    At each end the path is trimmed by the smaller of a quarter of its voxels
    and the voxels lying within the local radius of that end. Junction ends use
    the radius at the junction voxel; tip ends use the path's median radius.
    """
    r = edt.distance[path[:, 0], path[:, 1], path[:, 2]]
    n = len(path)
    if n == 1:
        return float(2.0 * r[0])
    steps = np.sqrt(((np.diff(path.astype(float), axis=0) * np.asarray(edt.spacing)) ** 2).sum(axis=1))
    from_start = np.concatenate([[0.0], np.cumsum(steps)])
    from_end = from_start[-1] - from_start
    median = float(np.median(r))
    cap = n // 4
    lo = _trim_count(from_start, median if start_is_tip else float(r[0]), cap)
    hi = _trim_count(from_end, median if end_is_tip else float(r[-1]), cap)
    core = r[lo:n - hi]
    return float(2.0 * core.mean())


def measure(tree: VesselTree, edt: DistanceField, stride: int = LENGTH_STRIDE) -> VesselTree:
    """Length (µm, knot polyline with ``stride``) and trimmed-mean diameter of every segment."""
    parents = {s.parent for s in tree.segments}
    out = []
    for s in tree.segments:
        start_tip = s.parent is None
        end_tip = s.id not in parents
        out.append(replace(
            s,
            length=arc_length(s.path, tree.spacing, stride),
            diameter=segment_diameter(s.path, edt, start_tip, end_tip),
        ))
    return replace(tree, segments=tuple(out))


def retract_tips(tree: VesselTree, edt: DistanceField) -> VesselTree:
    """Cut the part of each free end that runs into the vessel's rounded end cap.

    Thinning leaves free ends reaching most of the way into the cap, where the
    inscribed radius shrinks towards zero. Tip voxels are dropped while their
    distance-transform value is more than half a voxel below the segment's
    median; at most half of a path is removed.
    """
    half_voxel = 0.5 * min(tree.spacing)
    parents = {s.parent for s in tree.segments}
    out = []
    changed = False
    for s in tree.segments:
        r = edt.distance[s.path[:, 0], s.path[:, 1], s.path[:, 2]]
        floor_ = float(np.median(r)) - half_voxel
        n = len(s.path)
        budget = n // 2
        lo, hi = 0, n
        if s.id not in parents:
            while hi - 1 > lo and n - hi < budget and r[hi - 1] < floor_:
                hi -= 1
        if s.parent is None:
            while lo + 1 < hi and lo < budget and r[lo] < floor_:
                lo += 1
        if (lo, hi) == (0, n):
            out.append(s)
            continue
        changed = True
        path = s.path[lo:hi]
        out.append(replace(s, path=path, length=arc_length(path, tree.spacing, LENGTH_STRIDE)))
    return replace(tree, segments=tuple(out)) if changed else tree
