"""Soft-clustering engine: lens cover, per-cell clustering, nerve graph.

The engine takes 2D lens values for a dataset, covers them with overlapping
interval products, clusters each cell's preimage, and connects clusters that
share members. Only the 1-skeleton of the nerve is built; downstream
consumers use nodes and edges exclusively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .colors import hyab

NOISE = -1


@dataclass(frozen=True)
class Cover:
    """Overlapping interval cover of 2D lens values.

    ``intervals`` holds one (n_i, 2) array of [low, high] bounds per
    dimension. Consecutive intervals in a dimension overlap by the gain
    fraction of the interval length, and their union spans the data range.
    """

    intervals: tuple[np.ndarray, np.ndarray]
    gains: tuple[float, float]

    @property
    def n_intervals(self) -> tuple[int, int]:
        return (len(self.intervals[0]), len(self.intervals[1]))

    def cells(self) -> list[tuple[int, int]]:
        """All cover cells in lexicographic (dim0, dim1) order."""
        n0, n1 = self.n_intervals
        return [(i, j) for i in range(n0) for j in range(n1)]

    def cell_members(self, lens_values: np.ndarray, cell: tuple[int, int]) -> np.ndarray:
        """Indices of lens values inside the closed interval product."""
        lo0, hi0 = self.intervals[0][cell[0]]
        lo1, hi1 = self.intervals[1][cell[1]]
        v = np.asarray(lens_values)
        mask = ((v[:, 0] >= lo0) & (v[:, 0] <= hi0)
                & (v[:, 1] >= lo1) & (v[:, 1] <= hi1))
        return np.nonzero(mask)[0]


def build_cover(lens_values, n_intervals: tuple[int, int],
                gains: tuple[float, float]) -> Cover:
    """Cover each lens dimension with equal-length overlapping intervals.

    With n intervals of gain g spanning [lo, hi], the interval length is
    span / (n - (n-1)*g) and starts are spaced length*(1-g) apart, so every
    consecutive pair overlaps by exactly the gain fraction and the last
    interval ends at hi.
    """
    v = np.asarray(lens_values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot build a cover over empty lens values")
    if v.ndim != 2 or v.shape[1] != 2:
        raise ValueError(f"lens values must be (N, 2), got {v.shape}")
    dims = []
    for d in range(2):
        n = int(n_intervals[d])
        g = float(gains[d])
        if n < 1:
            raise ValueError(f"need at least one interval per dimension, got {n}")
        if not 0.0 <= g < 1.0:
            raise ValueError(f"gain must be in [0, 1), got {g}")
        lo = float(v[:, d].min())
        hi = float(v[:, d].max())
        span = hi - lo
        length = span / (n - (n - 1) * g) if n > 1 else span
        starts = lo + np.arange(n) * length * (1.0 - g)
        ivals = np.stack([starts, starts + length], axis=1)
        ivals[-1, 1] = hi  # guard the top endpoint against rounding
        dims.append(ivals)
    return Cover(intervals=(dims[0], dims[1]), gains=(float(gains[0]), float(gains[1])))


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:  # path compression
            p[i], i = root, p[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra > rb:
                ra, rb = rb, ra
            self.parent[rb] = ra  # lower root wins, keeps labels deterministic


def _neighbor_pairs(points: np.ndarray, eps: float, metric) -> np.ndarray:
    """Index pairs (i < j) at distance <= eps under the given metric.

    'euclidean' and 'hyab' use a KD-tree; HyAB dominates the Euclidean
    distance in Lab space, so the tree query is a superset that gets
    filtered exactly. A callable metric falls back to brute force.
    """
    n = len(points)
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    if metric == "euclidean":
        pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
        return pairs.astype(np.int64)
    if metric == "hyab":
        pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
        if len(pairs) == 0:
            return pairs.astype(np.int64)
        d = hyab(points[pairs[:, 0]], points[pairs[:, 1]])
        return pairs[d <= eps].astype(np.int64)
    if callable(metric):
        rows = []
        for i in range(n):
            for j in range(i + 1, n):
                if metric(points[i], points[j]) <= eps:
                    rows.append((i, j))
        return np.asarray(rows, dtype=np.int64).reshape(-1, 2)
    raise ValueError(f"unknown metric: {metric!r}")


def dbscan(points, eps: float, min_pts: int, metric="euclidean",
           count_self: bool = True) -> np.ndarray:
    """Density-based clustering; returns a label per point, -1 for noise.

    A point is core when its eps-neighborhood holds at least ``min_pts``
    points (the point itself counts when ``count_self`` is set, which is the
    default reading used throughout this package). Clusters are the
    connected components of core points under the eps relation; non-core
    points adjacent to a core point join the cluster of their lowest-index
    core neighbor, everything else is noise. Labels are renumbered 0, 1, ...
    by each cluster's lowest core point index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels

    pairs = _neighbor_pairs(points, eps, metric)
    counts = np.zeros(n, dtype=np.int64)
    if len(pairs):
        np.add.at(counts, pairs[:, 0], 1)
        np.add.at(counts, pairs[:, 1], 1)
    if count_self:
        counts += 1
    core = counts >= min_pts

    uf = _UnionFind(n)
    if len(pairs):
        both = core[pairs[:, 0]] & core[pairs[:, 1]]
        for a, b in pairs[both]:
            uf.union(int(a), int(b))

    roots = np.fromiter((uf.find(i) if core[i] else -1 for i in range(n)),
                        dtype=np.int64, count=n)

    # Border points attach to their lowest-index core neighbor's cluster.
    border_root = np.full(n, n, dtype=np.int64)
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        m = core[j] & ~core[i]
        np.minimum.at(border_root, i[m], j[m])
        m = core[i] & ~core[j]
        np.minimum.at(border_root, j[m], i[m])
    for b in np.nonzero(border_root < n)[0]:
        roots[b] = uf.find(int(border_root[b]))

    assigned = roots >= 0
    if assigned.any():
        order = {r: k for k, r in enumerate(sorted(set(roots[assigned].tolist())))}
        labels[assigned] = [order[r] for r in roots[assigned]]
    return labels


@dataclass(frozen=True)
class RefinedCluster:
    """One cluster of a cover cell's preimage: the cell index plus member ids."""

    cell: tuple[int, int]
    members: np.ndarray  # sorted indices into the input dataset

    def member_set(self) -> frozenset:
        return frozenset(self.members.tolist())


def refined_pullback(lens_values, cover: Cover, cluster_fn) -> list[RefinedCluster]:
    """Cluster every cover cell's preimage and collect the non-noise clusters.

    ``cluster_fn`` maps the member indices of a cell to per-member labels
    (noise = -1). Clusters within a cell are ordered by their smallest
    member id; cells are visited in lexicographic order.
    """
    out: list[RefinedCluster] = []
    for cell in cover.cells():
        ids = cover.cell_members(lens_values, cell)
        if len(ids) == 0:
            continue
        labels = np.asarray(cluster_fn(ids))
        present = sorted(set(labels[labels != NOISE].tolist()),
                         key=lambda lab: int(ids[labels == lab].min()))
        for lab in present:
            out.append(RefinedCluster(cell=cell, members=np.sort(ids[labels == lab])))
    return out


@dataclass
class MapperGraph:
    """Nerve 1-skeleton: one node per refined cluster, edges on shared members."""

    nodes: list[RefinedCluster]
    edges: list[tuple[int, int]] = field(default_factory=list)

    def save_text(self, path) -> None:
        """Write a plain-text dump: node id, cell, member ids, then edges."""
        with open(path, "w") as fh:
            fh.write(f"mappergraph v1 nodes={len(self.nodes)} edges={len(self.edges)}\n")
            for i, node in enumerate(self.nodes):
                members = " ".join(str(m) for m in node.members.tolist())
                fh.write(f"node {i} cell {node.cell[0]} {node.cell[1]} members {members}\n")
            for u, v in self.edges:
                fh.write(f"edge {u} {v}\n")


def nerve(clusters: list[RefinedCluster]) -> MapperGraph:
    """Connect every pair of clusters whose member sets intersect.

    Uses member -> node incidence lists, so the cost scales with the overlap
    structure rather than with all node pairs.
    """
    incident: dict[int, list[int]] = {}
    for idx, cluster in enumerate(clusters):
        for m in cluster.members.tolist():
            incident.setdefault(m, []).append(idx)
    edges = set()
    for nodes in incident.values():
        for a in range(len(nodes)):
            for b in range(a + 1, len(nodes)):
                edges.add((nodes[a], nodes[b]))
    return MapperGraph(nodes=list(clusters), edges=sorted(edges))
