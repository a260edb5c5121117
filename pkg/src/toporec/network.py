"""Coarse color-region network built from a sampled color set.

A chroma/hue lens projects Lab colors to 2D, the soft-clustering engine
groups them into overlapping color regions, and the resulting graph gets a
cyclic hue closure, redundant-node merging, HyAB edge weights, and a
shortest-path similarity matrix. The finished network answers one question
for the descriptor stage: which region(s) does a given sRGB color belong to.
"""

from __future__ import annotations

import heapq
import io
from dataclasses import dataclass, field

import numpy as np

from . import mapper
from .colors import ColorSet, hyab, pack_srgb, sample_srgb_grid, srgb_to_lab, unpack_srgb

FORMAT_VERSION = 1
_DELTA_DECIMALS = 12


def chroma_hue_lens(lab, xi: float) -> np.ndarray:
    """Project Lab colors to (chroma, offset hue).

    Chroma is sqrt(a*^2 + b*^2); hue is the full-quadrant angle of (a*, b*)
    mapped into [0, 2*pi) and shifted by the constant ``xi`` so that a chosen
    hue family is not split across the cover seam. The gray axis (a*=b*=0)
    takes angle 0 by convention.
    """
    lab = np.asarray(lab, dtype=np.float64)
    a, b = lab[..., 1], lab[..., 2]
    chroma = np.hypot(a, b)
    hue = np.arctan2(b, a)
    hue = np.where(hue < 0, hue + 2.0 * np.pi, hue)
    hue = np.where(chroma == 0, 0.0, hue)
    return np.stack([chroma, xi + hue], axis=-1)


@dataclass(frozen=True)
class NetworkParams:
    """Build parameters for the color network."""

    xi: float = np.pi / 8
    n_intervals: tuple[int, int] = (3, 8)
    gains: tuple[float, float] = (0.10, 0.25)
    eps: float = 7.0
    min_pts: int = 6
    merge_overlap: float = 0.95
    count_self: bool = True


@dataclass
class ColorNode:
    """A color region: member colors (packed 24-bit sRGB) plus their mean.

    The mean color is the channel-wise arithmetic mean of the members in
    sRGB, converted to Lab; it is recomputed whenever the member set changes.
    """

    members: np.ndarray  # sorted packed sRGB ints
    mean_lab: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean_lab is None:
            self.recompute_mean()

    def recompute_mean(self) -> None:
        rgb = unpack_srgb(self.members).astype(np.float64)
        self.mean_lab = srgb_to_lab(rgb.mean(axis=0))


@dataclass
class ColorNetwork:
    """Final color-region network with weighted edges and similarity matrix."""

    nodes: list[ColorNode]
    edges: list[tuple[int, int, float]]
    delta: np.ndarray
    params: NetworkParams
    grid_step: int
    _membership: dict | None = field(default=None, repr=False)

    @property
    def n_regions(self) -> int:
        return len(self.nodes)

    def _index(self) -> dict:
        if self._membership is None:
            table: dict[int, tuple[int, ...]] = {}
            for idx, node in enumerate(self.nodes):
                for packed in node.members.tolist():
                    table[packed] = table.get(packed, ()) + (idx,)
            self._membership = table
        return self._membership

    def snap_to_grid(self, rgb) -> np.ndarray:
        """Round channels to the nearest sampled grid level."""
        v = np.asarray(rgb, dtype=np.float64)
        snapped = np.rint(v / self.grid_step) * self.grid_step
        return np.clip(snapped, 0, 255).astype(np.int64)

    def regions_of(self, rgb) -> tuple[int, ...]:
        """Region ids containing the color; never empty.

        Colors that were clustered nowhere (grid noise, or off the sampled
        grid entirely) map to the single node with the nearest mean color
        under HyAB.
        """
        return self.batch_regions(np.asarray(rgb).reshape(1, 3))[0]

    def batch_regions(self, rgb_array) -> list[tuple[int, ...]]:
        """Membership lookup for an (N, 3) color array; snapping, packing,
        and the nearest-mean fallback all run vectorized."""
        rgb_array = np.asarray(rgb_array)
        if len(rgb_array) == 0:
            return []
        packed = pack_srgb(self.snap_to_grid(rgb_array))
        table = self._index()
        out: list[tuple[int, ...]] = [()] * len(packed)
        misses = []
        for i, key in enumerate(packed.tolist()):
            hit = table.get(key)
            if hit is None:
                misses.append(i)
            else:
                out[i] = hit
        if misses:
            means = np.stack([n.mean_lab for n in self.nodes])
            lab = srgb_to_lab(rgb_array[misses].astype(np.float64))
            nearest = np.argmin(hyab(lab[:, None, :], means[None, :, :]), axis=1)
            for i, node in zip(misses, nearest.tolist()):
                out[i] = (int(node),)
        return out

    # -- serialization ----------------------------------------------------

    def dumps(self) -> str:
        p = self.params
        buf = io.StringIO()
        buf.write(f"colornetwork v{FORMAT_VERSION}\n")
        buf.write(f"grid_step {self.grid_step}\n")
        buf.write(f"xi {p.xi!r}\n")
        buf.write(f"intervals {p.n_intervals[0]} {p.n_intervals[1]}\n")
        buf.write(f"gains {p.gains[0]!r} {p.gains[1]!r}\n")
        buf.write(f"eps {p.eps!r}\n")
        buf.write(f"min_pts {p.min_pts}\n")
        buf.write(f"merge_overlap {p.merge_overlap!r}\n")
        buf.write(f"count_self {int(p.count_self)}\n")
        buf.write(f"nodes {len(self.nodes)}\n")
        for i, node in enumerate(self.nodes):
            mean = " ".join(repr(float(x)) for x in node.mean_lab)
            members = " ".join(str(m) for m in node.members.tolist())
            buf.write(f"node {i} mean {mean} members {members}\n")
        buf.write(f"edges {len(self.edges)}\n")
        for u, v, w in self.edges:
            buf.write(f"edge {u} {v} {w!r}\n")
        buf.write("delta\n")
        for row in self.delta:
            buf.write(" ".join(f"{x:.{_DELTA_DECIMALS}f}" for x in row) + "\n")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "ColorNetwork":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("colornetwork v"):
            raise ValueError(f"{path}: not a color network file")
        version = int(lines[0].split("v")[-1])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        fields = {}
        pos = 1
        for key in ("grid_step", "xi", "intervals", "gains", "eps", "min_pts",
                    "merge_overlap", "count_self"):
            name, _, rest = lines[pos].partition(" ")
            assert name == key, f"expected {key}, got {name}"
            fields[key] = rest
            pos += 1
        n_nodes = int(lines[pos].split()[1])
        pos += 1
        nodes = []
        for _ in range(n_nodes):
            parts = lines[pos].split()
            mean = np.array([float(parts[3]), float(parts[4]), float(parts[5])])
            members = np.array([int(x) for x in parts[7:]], dtype=np.int64)
            nodes.append(ColorNode(members=members, mean_lab=mean))
            pos += 1
        n_edges = int(lines[pos].split()[1])
        pos += 1
        edges = []
        for _ in range(n_edges):
            _, u, v, w = lines[pos].split()
            edges.append((int(u), int(v), float(w)))
            pos += 1
        assert lines[pos] == "delta"
        pos += 1
        delta = np.array([[float(x) for x in lines[pos + i].split()]
                          for i in range(n_nodes)])
        ig0, ig1 = fields["intervals"].split()
        g0, g1 = fields["gains"].split()
        params = NetworkParams(
            xi=float(fields["xi"]), n_intervals=(int(ig0), int(ig1)),
            gains=(float(g0), float(g1)), eps=float(fields["eps"]),
            min_pts=int(fields["min_pts"]),
            merge_overlap=float(fields["merge_overlap"]),
            count_self=bool(int(fields["count_self"])))
        return cls(nodes=nodes, edges=edges, delta=delta, params=params,
                   grid_step=int(fields["grid_step"]))


def augment_cyclic_edges(graph: mapper.MapperGraph, cover: mapper.Cover) -> mapper.MapperGraph:
    """Close the hue seam: link first-interval nodes to last-interval nodes.

    The hue dimension (cover dimension 2) is periodic but the interval cover
    is not, so nodes living in the first and last hue intervals of the same
    chroma interval get connected directly.
    """
    n_hue = cover.n_intervals[1]
    if n_hue < 2:
        return graph
    edges = set(graph.edges)
    first = {}
    last = {}
    for idx, node in enumerate(graph.nodes):
        chroma_i, hue_i = node.cell
        if hue_i == 0:
            first.setdefault(chroma_i, []).append(idx)
        if hue_i == n_hue - 1:
            last.setdefault(chroma_i, []).append(idx)
    for chroma_i, lows in first.items():
        for u in lows:
            for v in last.get(chroma_i, []):
                if u != v:
                    edges.add((min(u, v), max(u, v)))
    return mapper.MapperGraph(nodes=graph.nodes, edges=sorted(edges))


def _overlap_fraction(a: np.ndarray, b: np.ndarray) -> float:
    inter = len(np.intersect1d(a, b, assume_unique=True))
    return inter / min(len(a), len(b))


def merge_redundant_nodes(members: list[np.ndarray], edges: set[tuple[int, int]],
                          threshold: float, eps: float
                          ) -> tuple[list[np.ndarray], set[tuple[int, int]]]:
    """Collapse node pairs that are near-duplicates of each other.

    A pair merges when the shared fraction of the smaller member set exceeds
    ``threshold`` and the mean colors are neighbors (HyAB <= eps). Merging
    unions the member sets and re-attaches edges; passes repeat until no
    pair qualifies, capped at the node count to guarantee termination.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    members = [np.asarray(m) for m in members]
    edges = set(edges)

    def mean_lab(m):
        return srgb_to_lab(unpack_srgb(m).astype(np.float64).mean(axis=0))

    for _ in range(max(1, len(members))):
        means = [mean_lab(m) for m in members]
        pair = None
        n = len(members)
        for i in range(n):
            for j in range(i + 1, n):
                if (hyab(means[i], means[j]) <= eps
                        and _overlap_fraction(members[i], members[j]) > threshold):
                    pair = (i, j)
                    break
            if pair:
                break
        if pair is None:
            break
        i, j = pair
        merged = np.unique(np.concatenate([members[i], members[j]]))
        members = [m for k, m in enumerate(members) if k not in (i, j)] + [merged]

        # Renumber: indices above the removed slots shift down, the merged
        # node takes the last slot.
        def new_index(k, lo=i, hi=j, last=len(members) - 1):
            if k in (lo, hi):
                return last
            return k - (k > lo) - (k > hi)

        edges = {tuple(sorted((new_index(u), new_index(v))))
                 for u, v in edges if new_index(u) != new_index(v)}
    return members, edges


def similarity_matrix(n_nodes: int, edges: list[tuple[int, int, float]]) -> np.ndarray:
    """All-pairs similarity 1 / (1 + shortest-path weight).

    Runs Dijkstra from every node over the weighted edges. Unreachable pairs
    get similarity 0 (the limit of the formula as the path weight grows).
    """
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n_nodes)]
    for u, v, w in edges:
        if w < 0:
            raise ValueError(f"negative edge weight on ({u}, {v}): {w}")
        adj[u].append((v, w))
        adj[v].append((u, w))
    delta = np.zeros((n_nodes, n_nodes))
    for src in range(n_nodes):
        dist = np.full(n_nodes, np.inf)
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v, w in adj[u]:
                nd = d + w
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        finite = np.isfinite(dist)
        delta[src, finite] = 1.0 / (1.0 + dist[finite])
    return delta


def generate_color_network(colors: ColorSet, params: NetworkParams = NetworkParams()
                           ) -> ColorNetwork:
    """Run the full build: lens, cover, clustering, nerve, closure, merge, delta."""
    lens = chroma_hue_lens(colors.lab, params.xi)
    cover = mapper.build_cover(lens, params.n_intervals, params.gains)

    def cluster_cell(ids):
        return mapper.dbscan(colors.lab[ids], eps=params.eps,
                             min_pts=params.min_pts, metric="hyab",
                             count_self=params.count_self)

    clusters = mapper.refined_pullback(lens, cover, cluster_cell)
    graph = mapper.nerve(clusters)
    graph = augment_cyclic_edges(graph, cover)

    packed = pack_srgb(colors.srgb)
    members = [np.sort(packed[c.members]) for c in graph.nodes]
    edge_set = {tuple(sorted(e)) for e in graph.edges}
    members, edge_set = merge_redundant_nodes(members, edge_set,
                                              params.merge_overlap, params.eps)

    nodes = [ColorNode(members=m) for m in members]
    weighted = [(u, v, float(hyab(nodes[u].mean_lab, nodes[v].mean_lab)))
                for u, v in sorted(edge_set)]
    delta = similarity_matrix(len(nodes), weighted)
    step = _infer_grid_step(colors)
    return ColorNetwork(nodes=nodes, edges=weighted, delta=delta,
                        params=params, grid_step=step)


def _infer_grid_step(colors: ColorSet) -> int:
    levels = np.unique(colors.srgb)
    if len(levels) < 2:
        return 255
    # the top level is pinned to 255, which may sit closer than one step to
    # its neighbor; the regular spacing is the largest gap
    return int(np.diff(levels).max())


def build_grid_network(grid_step: int, params: NetworkParams = NetworkParams()
                       ) -> ColorNetwork:
    """Convenience wrapper: sample the sRGB grid and build the network."""
    return generate_color_network(sample_srgb_grid(grid_step), params)
