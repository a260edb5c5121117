"""Colored point clouds: ingestion, preprocessing, pose normalization, slicing.

Clouds are treated as immutable; every operation returns a new cloud. The
pose normalization aligns a cloud's oriented bounding box with the axes,
orders the extents x >= y >= z, and translates the minimum corner to the
origin, so that downstream slicing sees every object in a canonical frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloudError


@dataclass(frozen=True)
class PointCloud:
    """Points (N, 3) float64 plus per-point sRGB colors (N, 3) uint8."""

    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        cols = np.asarray(self.colors, dtype=np.uint8)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if cols.shape != pts.shape:
            raise ValueError(f"colors shape {cols.shape} != points shape {pts.shape}")
        if len(pts) and not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", cols)

    def __len__(self) -> int:
        return len(self.points)

    def extents(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(3)
        return self.points.max(axis=0) - self.points.min(axis=0)

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points=points, colors=self.colors)

    def select(self, idx) -> "PointCloud":
        return PointCloud(points=self.points[idx], colors=self.colors[idx])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters; depth_scale converts depth units to meters."""

    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 0.001

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")


def backproject(depth: np.ndarray, rgb: np.ndarray, mask: np.ndarray,
                intrinsics: CameraIntrinsics) -> PointCloud:
    """Back-project masked pixels with nonzero depth through the pinhole model.

    ``depth`` holds integer depth units, ``rgb`` 8-bit colors, ``mask`` a
    boolean (or nonzero) instance bitmap aligned with both.
    """
    depth = np.asarray(depth)
    mask = np.asarray(mask).astype(bool)
    if depth.shape != mask.shape:
        raise ValueError("depth and mask shapes differ")
    valid = mask & (depth > 0)
    if not valid.any():
        raise EmptyCloudError("mask selects no pixels with valid depth")
    v, u = np.nonzero(valid)
    z = depth[v, u].astype(np.float64) * intrinsics.depth_scale
    x = (u.astype(np.float64) - intrinsics.cx) * z / intrinsics.fx
    y = (v.astype(np.float64) - intrinsics.cy) * z / intrinsics.fy
    return PointCloud(points=np.stack([x, y, z], axis=1), colors=rgb[v, u])


def scale_cloud(cloud: PointCloud, sigma_s: float) -> PointCloud:
    """Multiply all coordinates by the scale factor."""
    if sigma_s <= 0:
        raise ValueError(f"scale factor must be positive, got {sigma_s}")
    return cloud.with_points(cloud.points * sigma_s)


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Replace each occupied voxel by the centroid and mean color of its points."""
    if voxel <= 0:
        raise ValueError(f"voxel size must be positive, got {voxel}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                   return_counts=True)
    n_vox = len(counts)
    pts = np.zeros((n_vox, 3))
    cols = np.zeros((n_vox, 3))
    np.add.at(pts, inverse, cloud.points)
    np.add.at(cols, inverse, cloud.colors.astype(np.float64))
    pts /= counts[:, None]
    cols /= counts[:, None]
    # keep the output ordered by first appearance for determinism
    order = np.full(n_vox, len(cloud), dtype=np.int64)
    np.minimum.at(order, inverse, np.arange(len(cloud)))
    rank = np.argsort(order, kind="stable")
    return PointCloud(points=pts[rank],
                      colors=np.clip(np.rint(cols[rank]), 0, 255).astype(np.uint8))


def remove_outliers(cloud: PointCloud, k: int = 20, std_ratio: float = 2.0) -> PointCloud:
    """Drop points whose mean kNN distance exceeds mean + std_ratio * std.

    Clouds smaller than k + 1 points are returned unchanged.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(cloud)
    if n <= k:
        return cloud
    tree = cKDTree(cloud.points)
    dists, _ = tree.query(cloud.points, k=k + 1)  # first neighbor is the point itself
    mean_d = dists[:, 1:].mean(axis=1)
    cutoff = mean_d.mean() + std_ratio * mean_d.std()
    return cloud.select(mean_d <= cutoff)


# -- pose normalization ------------------------------------------------------


def _convex_hull_2d(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = np.unique(pts, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2:
                a = chain[-1] - chain[-2]
                b = p - chain[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def _min_area_rect_angle(pts2d: np.ndarray) -> float:
    """Rotation (radians) that aligns the min-area bounding rectangle.

    Returned angle is folded into (-pi/4, pi/4] so the correction is always
    the smallest one; rectangles are invariant under quarter turns.
    """
    hull = _convex_hull_2d(pts2d)
    if len(hull) < 2:
        return 0.0
    if len(hull) == 2:
        d = hull[1] - hull[0]
        angle = float(np.arctan2(d[1], d[0]))
        return _fold_quarter(angle)
    best_area = np.inf
    best_angle = 0.0
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    for angle in angles:
        c, s = np.cos(-angle), np.sin(-angle)
        rot = hull @ np.array([[c, -s], [s, c]]).T
        w = rot[:, 0].max() - rot[:, 0].min()
        h = rot[:, 1].max() - rot[:, 1].min()
        area = w * h
        if area < best_area - 1e-15:
            best_area = area
            best_angle = float(angle)
    return _fold_quarter(best_angle)


def _fold_quarter(angle: float) -> float:
    """Fold an angle into (-pi/4, pi/4] modulo quarter turns."""
    folded = angle % (np.pi / 2)
    if folded > np.pi / 4:
        folded -= np.pi / 2
    return float(folded)


_PLANE_ROTATIONS = (
    ((0, 1), 2),  # x-y projection corrects rotation about z
    ((1, 2), 0),  # y-z projection corrects rotation about x
    ((2, 0), 1),  # z-x projection corrects rotation about y
)


def _axis_rotation(axis: int, theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    rot = np.eye(3)
    rot[i, i] = c
    rot[j, j] = c
    rot[i, j] = -s
    rot[j, i] = s
    return rot


def view_normalize(cloud: PointCloud, max_iter: int = 10,
                   tol: float = 1e-4) -> tuple[PointCloud, tuple[np.ndarray, np.ndarray]]:
    """Canonical pose: box-aligned axes, extents x >= y >= z, first octant.

    Starts from the principal components of the point covariance, then
    iteratively re-aligns the minimum-area bounding rectangles of the three
    coordinate-plane projections until the corrections drop below ``tol``
    radians. Axis directions are fixed by requiring the centroid to sit on
    the non-negative side of the box center on every axis, which resolves
    the sign indeterminacy deterministically (the resulting orthogonal map
    may include a reflection). Returns the normalized cloud and the (R, t)
    transform with ``normalized = points @ R.T + t``.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot normalize an empty cloud")
    pts = cloud.points
    center = pts.mean(axis=0)
    centered = pts - center
    cov = centered.T @ centered
    _, eigvecs = np.linalg.eigh(cov)
    rot = eigvecs[:, ::-1].T  # rows = principal axes, descending variance
    if np.linalg.det(rot) < 0:
        rot = rot * np.array([[1.0], [1.0], [-1.0]])
    y = centered @ rot.T

    for _ in range(max_iter):
        total = 0.0
        for (a, b), axis in _PLANE_ROTATIONS:
            theta = _min_area_rect_angle(y[:, (a, b)])
            if abs(theta) > 1e-12:
                fix = _axis_rotation(axis, -theta)
                y = y @ fix.T
                rot = fix @ rot
            total += abs(theta)
        if total < tol:
            break

    # order axes by extent, largest first
    ext = y.max(axis=0) - y.min(axis=0)
    perm = np.argsort(-ext, kind="stable")
    y = y[:, perm]
    rot = rot[perm]

    # sign rule: centroid on the non-negative side of the box center
    mid = (y.max(axis=0) + y.min(axis=0)) / 2.0
    sign = np.where(y.mean(axis=0) >= mid, 1.0, -1.0)
    y = y * sign
    rot = rot * sign[:, None]

    offset = -y.min(axis=0)
    y = y + offset
    translation = offset - rot @ center
    return cloud.with_points(y), (rot, translation)


def to_first_octant(cloud: PointCloud) -> PointCloud:
    """Translate so the minimum corner sits at the origin."""
    if len(cloud) == 0:
        return cloud
    return cloud.with_points(cloud.points - cloud.points.min(axis=0))


def mirror_augment(cloud: PointCloud, include_double: bool = False) -> list[PointCloud]:
    """Original plus reflections of the x and y coordinates, each re-shifted
    into the first octant. ``include_double`` adds the combined xy mirror."""
    out = [cloud]
    for axes in ([0], [1]) + (([0, 1],) if include_double else ()):
        pts = cloud.points.copy()
        for ax in axes:
            pts[:, ax] = -pts[:, ax]
        out.append(to_first_octant(cloud.with_points(pts)))
    return out


def rotate_for_slicing(cloud: PointCloud, alpha: float) -> PointCloud:
    """Tilt the longitudinal (x) axis by alpha toward +z, then re-shift.

    A unit vector along +x maps to (cos(alpha), 0, sin(alpha)), so slicing
    the result along z walks down the length of the object.
    """
    c, s = np.cos(alpha), np.sin(alpha)
    rot = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    return to_first_octant(cloud.with_points(cloud.points @ rot.T))


def reorient_if_occluded(cloud: PointCloud, occluded: bool) -> PointCloud:
    """Rotate pi about z (x, y negate) and re-shift when occluded.

    Reverses the slicing order end-to-end so the intact end of a partially
    visible object leads.
    """
    if not occluded:
        return cloud
    pts = cloud.points * np.array([-1.0, -1.0, 1.0])
    return to_first_octant(cloud.with_points(pts))


# -- slicing -----------------------------------------------------------------


@dataclass(frozen=True)
class Slice:
    """Half-open z band of a cloud: i*sigma1 <= z < (i+1)*sigma1."""

    index: int
    member_ids: np.ndarray


@dataclass(frozen=True)
class Strip:
    """Half-open x band within a slice, indexed from the slice's own x minimum."""

    index: int
    member_ids: np.ndarray


def _band_indices(values: np.ndarray, width: float) -> tuple[np.ndarray, int]:
    """Half-open banding of non-negative values; the top boundary folds into
    the last band so an exactly-divisible extent does not spawn a band that
    holds only boundary points."""
    idx = np.floor(values / width).astype(np.int64)
    top = float(values.max())
    n_bands = max(int(np.ceil(top / width)), 1)
    idx = np.minimum(idx, n_bands - 1)
    return idx, n_bands


def slice_cloud(cloud: PointCloud, sigma1: float) -> list[Slice]:
    """Partition along z into bands of thickness sigma1, empties retained."""
    if sigma1 <= 0:
        raise ValueError(f"slice thickness must be positive, got {sigma1}")
    if len(cloud) == 0:
        return []
    z = cloud.points[:, 2]
    if z.min() < -1e-9:
        raise ValueError("cloud must lie in the first octant before slicing")
    idx, n_bands = _band_indices(np.maximum(z, 0.0), sigma1)
    return [Slice(index=i, member_ids=np.nonzero(idx == i)[0])
            for i in range(n_bands)]


def strips(cloud: PointCloud, slc: Slice, sigma2: float) -> list[Strip]:
    """Partition a slice along x into bands of width sigma2 from its own x min."""
    if sigma2 <= 0:
        raise ValueError(f"strip thickness must be positive, got {sigma2}")
    if len(slc.member_ids) == 0:
        return []
    x = cloud.points[slc.member_ids, 0]
    rel = x - x.min()
    idx, n_bands = _band_indices(rel, sigma2)
    return [Strip(index=j, member_ids=slc.member_ids[idx == j])
            for j in range(n_bands)]


def flatten_slice_z(cloud: PointCloud, slc: Slice, sigma1: float) -> PointCloud:
    """The slice's points with every z replaced by index * sigma1."""
    sub = cloud.select(slc.member_ids)
    pts = sub.points.copy()
    pts[:, 2] = slc.index * sigma1
    return sub.with_points(pts)


# -- occlusion ---------------------------------------------------------------


def detect_occlusion(segmentation: np.ndarray, depth: np.ndarray,
                     instance_id: int) -> bool:
    """True when the instance borders another instance that is closer.

    Walks the instance contour (8-connectivity); a contour pixel flags
    occlusion when some neighbor belongs to a different nonzero instance
    and has strictly smaller depth.
    """
    seg = np.asarray(segmentation)
    depth = np.asarray(depth)
    if seg.shape != depth.shape:
        raise ValueError("segmentation and depth shapes differ")
    inst = seg == instance_id
    if not inst.any():
        raise ValueError(f"instance {instance_id} absent from segmentation map")
    h, w = seg.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = inst
    for dv in (-1, 0, 1):
        for du in (-1, 0, 1):
            if dv == 0 and du == 0:
                continue
            neigh_seg = np.full_like(seg, 0)
            neigh_depth = np.full(depth.shape, np.iinfo(np.int64).max, dtype=np.int64)
            src_v = slice(max(dv, 0), h + min(dv, 0))
            src_u = slice(max(du, 0), w + min(du, 0))
            dst_v = slice(max(-dv, 0), h + min(-dv, 0))
            dst_u = slice(max(-du, 0), w + min(-du, 0))
            neigh_seg[dst_v, dst_u] = seg[src_v, src_u]
            neigh_depth[dst_v, dst_u] = depth[src_v, src_u].astype(np.int64)
            hit = (inst
                   & (neigh_seg != 0)
                   & (neigh_seg != instance_id)
                   & (neigh_depth < depth.astype(np.int64)))
            if hit.any():
                return True
    return False
