"""Synthetic colored objects: parametric surfaces, views, occlusion, scenes.

Shapes are sampled as dense surface point clouds centered at the origin.
A view keeps only points whose outward normal faces the camera, with depth
quantized to millimeter units, reproducing the view-dependent
incompleteness of real depth sensors. A scene rasterizer projects placed
clouds into aligned RGB / depth / instance-segmentation images for the
recognition path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import CameraIntrinsics, PointCloud
from .errors import DataError, EmptyCloudError

DEPTH_QUANTUM = 0.001  # meters per depth unit

PRIMITIVES = ("box", "cylinder", "sphere", "capsule")


@dataclass(frozen=True)
class ColorScheme:
    """Surface coloring: uniform, two-tone split along x, or banded along x."""

    kind: str  # "uniform" | "two_tone" | "bands"
    colors: tuple[tuple[int, int, int], ...]
    band_width: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "two_tone", "bands"):
            raise ValueError(f"unknown color scheme {self.kind!r}")
        if self.kind == "uniform" and len(self.colors) != 1:
            raise ValueError("uniform scheme takes exactly one color")
        if self.kind == "two_tone" and len(self.colors) != 2:
            raise ValueError("two_tone scheme takes exactly two colors")
        if self.kind == "bands" and (len(self.colors) < 1 or self.band_width <= 0):
            raise ValueError("bands scheme needs colors and a positive width")
        for rgb in self.colors:
            if len(rgb) != 3 or any(not 0 <= int(v) <= 255 for v in rgb):
                raise ValueError(f"invalid color {rgb!r}")

    def paint(self, points: np.ndarray) -> np.ndarray:
        n = len(points)
        if self.kind == "uniform":
            return np.tile(np.asarray(self.colors[0], dtype=np.uint8), (n, 1))
        x = points[:, 0]
        if self.kind == "two_tone":
            out = np.empty((n, 3), dtype=np.uint8)
            first = x < 0.0
            out[first] = self.colors[0]
            out[~first] = self.colors[1]
            return out
        # bands are anchored at the object center so views agree on coloring
        idx = np.floor(x / self.band_width).astype(np.int64)
        palette = np.asarray(self.colors, dtype=np.uint8)
        return palette[idx % len(palette)]

    def to_json(self) -> dict:
        return {"kind": self.kind, "colors": [list(c) for c in self.colors],
                "band_width": self.band_width}

    @classmethod
    def from_json(cls, obj: dict) -> "ColorScheme":
        return cls(kind=obj["kind"],
                   colors=tuple(tuple(int(v) for v in c) for c in obj["colors"]),
                   band_width=float(obj.get("band_width", 0.0)))


def uniform(rgb) -> ColorScheme:
    return ColorScheme(kind="uniform", colors=(tuple(rgb),))


def two_tone(rgb_a, rgb_b) -> ColorScheme:
    return ColorScheme(kind="two_tone", colors=(tuple(rgb_a), tuple(rgb_b)))


@dataclass(frozen=True)
class ShapeSpec:
    """One synthetic object: primitive, dimensions in meters, coloring, label.

    Dimension conventions: box (lx, ly, lz); cylinder (length, radius) with
    the axis along x; sphere (radius,); capsule (length, radius) where
    length covers the cylindrical mid-section.
    """

    primitive: str
    dims: tuple[float, ...]
    scheme: ColorScheme
    label: str

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.primitive!r}")
        if any(d <= 0 for d in self.dims):
            raise ValueError("dimensions must be positive")
        expected = {"box": 3, "cylinder": 2, "sphere": 1, "capsule": 2}
        if len(self.dims) != expected[self.primitive]:
            raise ValueError(f"{self.primitive} takes {expected[self.primitive]} "
                             f"dimensions, got {len(self.dims)}")

    def to_json(self) -> dict:
        return {"primitive": self.primitive, "dims": list(self.dims),
                "scheme": self.scheme.to_json(), "label": self.label}

    @classmethod
    def from_json(cls, obj: dict) -> "ShapeSpec":
        return cls(primitive=obj["primitive"], dims=tuple(obj["dims"]),
                   scheme=ColorScheme.from_json(obj["scheme"]), label=obj["label"])


def _grid(lo, hi, spacing):
    """Symmetric sample positions covering [lo, hi] at roughly the spacing."""
    n = max(int(round((hi - lo) / spacing)), 1)
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


def _box_surface(lx, ly, lz, spacing):
    hx, hy, hz = lx / 2, ly / 2, lz / 2
    pts, nrm = [], []
    xs, ys, zs = _grid(-hx, hx, spacing), _grid(-hy, hy, spacing), _grid(-hz, hz, spacing)
    for sign in (-1.0, 1.0):
        gy, gz = np.meshgrid(ys, zs, indexing="ij")
        face = np.stack([np.full(gy.size, sign * hx), gy.ravel(), gz.ravel()], axis=1)
        pts.append(face)
        nrm.append(np.tile([sign, 0.0, 0.0], (len(face), 1)))
        gx, gz = np.meshgrid(xs, zs, indexing="ij")
        face = np.stack([gx.ravel(), np.full(gx.size, sign * hy), gz.ravel()], axis=1)
        pts.append(face)
        nrm.append(np.tile([0.0, sign, 0.0], (len(face), 1)))
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        face = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, sign * hz)], axis=1)
        pts.append(face)
        nrm.append(np.tile([0.0, 0.0, sign], (len(face), 1)))
    return np.concatenate(pts), np.concatenate(nrm)


def _disk(radius, spacing, x, normal_sign):
    rs = _grid(0, radius, spacing)
    pts = [np.array([[x, 0.0, 0.0]])]
    for r in rs:
        n = max(int(round(2 * np.pi * r / spacing)), 4)
        theta = (np.arange(n) + 0.5) * 2 * np.pi / n
        ring = np.stack([np.full(n, x), r * np.cos(theta), r * np.sin(theta)], axis=1)
        pts.append(ring)
    pts = np.concatenate(pts)
    return pts, np.tile([normal_sign, 0.0, 0.0], (len(pts), 1))


def _cylinder_side(length, radius, spacing, x_offset=0.0):
    xs = _grid(-length / 2, length / 2, spacing)
    n_theta = max(int(round(2 * np.pi * radius / spacing)), 6)
    theta = (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
    gx, gt = np.meshgrid(xs, theta, indexing="ij")
    pts = np.stack([gx.ravel() + x_offset,
                    radius * np.cos(gt.ravel()),
                    radius * np.sin(gt.ravel())], axis=1)
    nrm = np.stack([np.zeros(pts.shape[0]),
                    np.cos(gt.ravel()), np.sin(gt.ravel())], axis=1)
    return pts, nrm


def _sphere_surface(radius, spacing, center_x=0.0, hemisphere=None):
    n_phi = max(int(round(np.pi * radius / spacing)), 4)
    phis = (np.arange(n_phi) + 0.5) * np.pi / n_phi
    pts, nrm = [], []
    for phi in phis:
        ring_r = radius * np.sin(phi)
        n_theta = max(int(round(2 * np.pi * ring_r / spacing)), 4)
        theta = (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
        x = radius * np.cos(phi)
        if hemisphere == "+x" and x < 0:
            continue
        if hemisphere == "-x" and x > 0:
            continue
        ring = np.stack([np.full(n_theta, x),
                         ring_r * np.cos(theta), ring_r * np.sin(theta)], axis=1)
        pts.append(ring)
        nrm.append(ring / radius)
        if len(pts[-1]) and center_x:
            pts[-1] = pts[-1] + np.array([center_x, 0.0, 0.0])
    return np.concatenate(pts), np.concatenate(nrm)


def sample_surface(shape: ShapeSpec, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Points and outward unit normals of the full surface, origin-centered."""
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if shape.primitive == "box":
        return _box_surface(*shape.dims, spacing)
    if shape.primitive == "cylinder":
        length, radius = shape.dims
        side_p, side_n = _cylinder_side(length, radius, spacing)
        lo_p, lo_n = _disk(radius, spacing, -length / 2, -1.0)
        hi_p, hi_n = _disk(radius, spacing, length / 2, 1.0)
        return (np.concatenate([side_p, lo_p, hi_p]),
                np.concatenate([side_n, lo_n, hi_n]))
    if shape.primitive == "sphere":
        return _sphere_surface(shape.dims[0], spacing)
    length, radius = shape.dims  # capsule
    side_p, side_n = _cylinder_side(length, radius, spacing)
    lo_p, lo_n = _sphere_surface(radius, spacing, center_x=-length / 2,
                                 hemisphere="-x")
    hi_p, hi_n = _sphere_surface(radius, spacing, center_x=length / 2,
                                 hemisphere="+x")
    return (np.concatenate([side_p, lo_p, hi_p]),
            np.concatenate([side_n, lo_n, hi_n]))


def render_view(shape: ShapeSpec, direction, spacing: float = 0.004) -> PointCloud:
    """Visible-surface samples as seen from a camera along ``direction``.

    ``direction`` points from the object toward the camera. Surface points
    facing away are culled, and the coordinate along the view axis is
    quantized to millimeter depth units.
    """
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("camera direction must be nonzero")
    direction = direction / norm
    pts, normals = sample_surface(shape, spacing)
    visible = normals @ direction > 1e-9
    pts = pts[visible]
    if len(pts) == 0:
        raise EmptyCloudError(f"no visible surface from direction {direction}")
    s = pts @ direction
    snapped = np.rint(s / DEPTH_QUANTUM) * DEPTH_QUANTUM
    pts = pts + (snapped - s)[:, None] * direction
    return PointCloud(points=pts, colors=shape.scheme.paint(pts))


@dataclass(frozen=True)
class CameraGrid:
    """Sphere of view directions: azimuth [0, 2pi) x polar [0, pi]."""

    azimuth_step: float = np.pi / 36
    polar_step: float = np.pi / 36
    radius: float = 1.0

    def directions(self) -> list[tuple[float, float]]:
        n_az = int(round(2 * np.pi / self.azimuth_step))
        n_pol = int(round(np.pi / self.polar_step)) + 1
        if not np.isclose(n_az * self.azimuth_step, 2 * np.pi):
            raise ValueError("azimuth step must divide 2*pi")
        if not np.isclose((n_pol - 1) * self.polar_step, np.pi):
            raise ValueError("polar step must divide pi")
        return [(az * self.azimuth_step, pol * self.polar_step)
                for az in range(n_az) for pol in range(n_pol)]

    @staticmethod
    def unit_vector(azimuth: float, polar: float) -> np.ndarray:
        return np.array([np.sin(polar) * np.cos(azimuth),
                         np.sin(polar) * np.sin(azimuth),
                         np.cos(polar)])


def generate_training_set(shapes: list[ShapeSpec], grid: CameraGrid,
                          spacing: float = 0.004):
    """One labeled cloud per (shape, camera position)."""
    if not shapes:
        raise DataError("no shapes to render")
    out = []
    for shape in shapes:
        for azimuth, polar in grid.directions():
            cloud = render_view(shape, CameraGrid.unit_vector(azimuth, polar),
                                spacing)
            out.append((cloud, shape.label, (azimuth, polar)))
    return out


def occlude(cloud: PointCloud, fraction: float, end: str = "top") -> PointCloud:
    """Delete a fraction of the z-extent from the chosen end(s).

    ``end`` is "top", "bottom", or "both" (the fraction applies to each
    chosen end). The result must be non-empty.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    if end not in ("top", "bottom", "both"):
        raise ValueError(f"unknown end {end!r}")
    if fraction == 0.0:
        return cloud
    z = cloud.points[:, 2]
    lo, hi = z.min(), z.max()
    extent = hi - lo
    keep = np.ones(len(cloud), dtype=bool)
    if end in ("top", "both"):
        keep &= z <= hi - fraction * extent
    if end in ("bottom", "both"):
        keep &= z >= lo + fraction * extent
    if not keep.any():
        raise EmptyCloudError("occlusion removed every point")
    return cloud.select(keep)


def rasterize_scene(instances: list[tuple[PointCloud, int]],
                    intrinsics: CameraIntrinsics,
                    image_shape: tuple[int, int]
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project placed clouds (camera frame, z forward) to aligned images.

    Returns (rgb, depth, segmentation); nearer surfaces win each pixel.
    Depth is in integer ``depth_scale`` units, 0 where nothing projects.
    """
    h, w = image_shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    depth = np.zeros((h, w), dtype=np.uint16)
    seg = np.zeros((h, w), dtype=np.int64)
    zbuf = np.full((h, w), np.inf)
    for cloud, instance_id in instances:
        if instance_id <= 0:
            raise ValueError("instance ids must be positive")
        pts = cloud.points
        front = pts[:, 2] > 0
        pts = pts[front]
        cols = cloud.colors[front]
        u = np.rint(intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx).astype(int)
        v = np.rint(intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy).astype(int)
        ok = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        for ui, vi, z, c in sorted(zip(u[ok], v[ok], pts[ok, 2], cols[ok]),
                                   key=lambda t: (t[1], t[0], t[2])):
            if z < zbuf[vi, ui]:
                zbuf[vi, ui] = z
                rgb[vi, ui] = c
                depth[vi, ui] = min(int(round(z / intrinsics.depth_scale)), 0xFFFF)
                seg[vi, ui] = instance_id
    return rgb, depth, seg


# -- dataset manifests --------------------------------------------------------


def write_manifest(path, entries: list[dict],
                   shapes: list[ShapeSpec] | None = None) -> None:
    """Dataset manifest: one JSON object with a version and entry list.

    Entries carry at least file, label; views add azimuth/polar, occluded
    items an occlusion record. The generating shape specs are stored
    alongside when available.
    """
    doc = {"version": 1, "entries": entries}
    if shapes is not None:
        doc["shapes"] = [s.to_json() for s in shapes]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> list[dict]:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid manifest ({exc})") from exc
    if obj.get("version") != 1:
        raise DataError(f"{path}: unsupported manifest version")
    return obj["entries"]
