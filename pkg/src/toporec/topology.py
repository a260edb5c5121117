"""Connected-component persistence of slice filtrations and their images.

A slice is swept along x: every point births a component at its own
x-coordinate, and an edge between two nearby points appears once both
endpoints exist (at the larger x). Sweeping the filtration with a
union-find and the elder rule (the younger component dies on every merge)
produces one (birth, death) pair per point; components that survive the
sweep die at a caller-chosen cap. Diagrams are rasterized into Gaussian
persistence images on a fixed (birth, persistence) grid, giving a stable
fixed-size summary of the slice's shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Filtration:
    """Vertices (value per id, ascending with stable id tie-break) and edges
    (u, v, value) with value >= both endpoint values, sorted ascending."""

    vertex_values: np.ndarray  # filtration value per vertex id
    vertex_order: np.ndarray   # vertex ids sorted by (value, id)
    edges: np.ndarray          # (E, 3): u, v, value, sorted by (value, u, v)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_values)

    def max_value(self) -> float:
        top = float(self.vertex_values.max()) if len(self.vertex_values) else 0.0
        if len(self.edges):
            top = max(top, float(self.edges[:, 2].max()))
        return top


def slice_filtration(points: np.ndarray, radius: float) -> Filtration:
    """Build the x-sweep filtration of a z-flattened slice.

    Vertices take their point's x-coordinate as value; edges connect point
    pairs within Euclidean distance ``radius`` and take the larger endpoint
    x. The radius is normally a small multiple of the strip width so that
    adjacent strips stay connected.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return Filtration(vertex_values=np.empty(0),
                          vertex_order=np.empty(0, dtype=np.int64),
                          edges=np.empty((0, 3)))
    values = pts[:, 0].copy()
    order = np.lexsort((np.arange(len(pts)), values))

    diff = pts[:, None, :] - pts[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu, ju = np.triu_indices(len(pts), k=1)
    close = dist2[iu, ju] <= radius * radius
    u, v = iu[close], ju[close]
    ev = np.maximum(values[u], values[v])
    edges = np.stack([u.astype(np.float64), v.astype(np.float64), ev], axis=1)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))]
    return Filtration(vertex_values=values, vertex_order=order, edges=edges)


@dataclass(frozen=True)
class PersistenceDiagram:
    """(birth, death) pairs, one per vertex of the generating filtration."""

    pairs: np.ndarray  # (N, 2) with death >= birth

    def __len__(self) -> int:
        return len(self.pairs)

    def persistences(self) -> np.ndarray:
        if len(self.pairs) == 0:
            return np.empty(0)
        return self.pairs[:, 1] - self.pairs[:, 0]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("birth,death\n")
            for b, d in self.pairs:
                fh.write(f"{b!r},{d!r}\n")


def h0_persistence(filtration: Filtration, cap: float) -> PersistenceDiagram:
    """Sweep the filtration and pair every component birth with its death.

    Components merge along edges in ascending value; the elder rule kills
    the younger side (larger birth, ties broken toward the larger entry id).
    Components alive after the sweep die at ``cap``, which must not be
    smaller than any filtration value.
    """
    n = filtration.n_vertices
    if n == 0:
        return PersistenceDiagram(pairs=np.empty((0, 2)))
    if cap < filtration.max_value() - 1e-12:
        raise ValueError(f"cap {cap} below max filtration value "
                         f"{filtration.max_value()}")
    values = filtration.vertex_values
    # birth rank: position in the sweep order; smaller rank = elder
    rank = np.empty(n, dtype=np.int64)
    rank[filtration.vertex_order] = np.arange(n)
    rank_list = rank.tolist()

    parent = list(range(n))

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    pairs = []
    alive = n
    for u, v, value in filtration.edges.tolist():
        ru, rv = find(int(u)), find(int(v))
        if ru == rv:
            continue
        if rank_list[ru] > rank_list[rv]:
            ru, rv = rv, ru  # ru is now the elder root
        pairs.append((values[rv], float(value)))
        parent[rv] = ru
        alive -= 1
        if alive == 1:
            break  # later edges cannot merge anything

    roots = {find(i) for i in range(n)}
    for r in sorted(roots, key=lambda i: rank[i]):
        pairs.append((values[r], float(cap)))
    out = np.asarray(pairs, dtype=np.float64)
    out = out[np.lexsort((out[:, 1], out[:, 0]))]
    return PersistenceDiagram(pairs=out)


def persistence_image(diagram: PersistenceDiagram, grid: tuple[int, int],
                      birth_range: tuple[float, float],
                      pers_range: tuple[float, float],
                      kernel_sigma: float,
                      weight: str = "linear") -> np.ndarray:
    """Rasterize a diagram to an (H, W) image in (birth, persistence) space.

    Every pair contributes a normalized Gaussian bump at (birth, death -
    birth), scaled by a non-decreasing persistence weight (``linear`` is the
    persistence itself, so zero-persistence pairs vanish; ``constant`` is
    1). Rows index persistence, columns index birth, both evaluated at pixel
    centers.
    """
    h, w = grid
    if kernel_sigma <= 0:
        raise ValueError(f"kernel_sigma must be positive, got {kernel_sigma}")
    image = np.zeros((h, w))
    if len(diagram) == 0:
        return image
    births = diagram.pairs[:, 0]
    pers = diagram.persistences()
    if weight == "linear":
        weights = pers
    elif weight == "constant":
        weights = np.ones_like(pers)
    else:
        raise ValueError(f"unknown weight scheme: {weight!r}")

    b_lo, b_hi = birth_range
    p_lo, p_hi = pers_range
    b_centers = b_lo + (np.arange(w) + 0.5) * (b_hi - b_lo) / w
    p_centers = p_lo + (np.arange(h) + 0.5) * (p_hi - p_lo) / h
    norm = 1.0 / (2.0 * np.pi * kernel_sigma ** 2)
    inv = 1.0 / (2.0 * kernel_sigma ** 2)
    db = b_centers[None, :] - births[:, None]          # (N, W)
    dp = p_centers[None, :] - pers[:, None]            # (N, H)
    gb = np.exp(-(db ** 2) * inv)
    gp = np.exp(-(dp ** 2) * inv)
    image = norm * np.einsum("n,nh,nw->hw", weights, gp, gb)
    return image
