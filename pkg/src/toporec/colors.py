"""sRGB <-> CIELAB conversion, the HyAB color distance, and sampled color sets.

CIELAB coordinates use the CIE standard illuminant D65 with the 2-degree
observer, so the reference white maps to L*=100, a*=b*=0. All arithmetic is
double precision. HyAB is a hybrid distance: the absolute lightness
difference plus the Euclidean distance in the (a*, b*) plane. It behaves
sensibly over large color differences, which plain Euclidean Lab distance
and small-difference formulae do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# sRGB -> XYZ matrix for D65 primaries (IEC 61966-2-1).
_M_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_M_XYZ_TO_RGB = np.linalg.inv(_M_RGB_TO_XYZ)

# D65 / 2-degree observer reference white, Y normalized to 1.
_WHITE = np.array([0.95047, 1.00000, 1.08883])

_EPSILON = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0


def srgb_to_lab(rgb) -> np.ndarray:
    """Convert 8-bit sRGB values to CIELAB (D65/2-degree).

    Accepts a single (r, g, b) triple or an array of shape (..., 3) with
    channels in [0, 255]. Returns float64 Lab values of the same shape.
    """
    v = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _M_RGB_TO_XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _EPSILON, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab) -> np.ndarray:
    """Convert CIELAB back to 8-bit sRGB, clamping out-of-gamut values.

    Inverse of :func:`srgb_to_lab` on in-gamut colors; the round trip is the
    identity on every grid color. Returns integer channels in [0, 255].
    """
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f ** 3 > _EPSILON, f ** 3, (116.0 * f - 16.0) / _KAPPA)
    xyz = t * _WHITE
    linear = xyz @ _M_XYZ_TO_RGB.T
    linear = np.clip(linear, 0.0, 1.0)
    v = np.where(linear <= 0.0031308,
                 12.92 * linear,
                 1.055 * linear ** (1.0 / 2.4) - 0.055)
    return np.clip(np.rint(v * 255.0), 0, 255).astype(np.int64)


def hyab(m, n) -> np.ndarray | float:
    """HyAB distance: |dL*| + sqrt(da*^2 + db*^2). Broadcasts over (..., 3)."""
    m = np.asarray(m, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    dl = np.abs(m[..., 0] - n[..., 0])
    dab = np.hypot(m[..., 1] - n[..., 1], m[..., 2] - n[..., 2])
    out = dl + dab
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ColorSet:
    """An ordered, duplicate-free set of sRGB colors with their Lab images.

    ``srgb`` is an (N, 3) integer array, ``lab`` the matching (N, 3) float64
    array in the same order.
    """

    srgb: np.ndarray
    lab: np.ndarray

    def __len__(self) -> int:
        return len(self.srgb)


def sample_srgb_grid(step: int) -> ColorSet:
    """Uniformly sample the sRGB cube with the given channel step.

    Samples {0, step, 2*step, ...} per channel, always including 255 as the
    final sample, in ascending (r, g, b) lexicographic order. A step of 5
    yields 52 values per channel, 52**3 colors in total.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    levels = list(range(0, 256, step))
    if levels[-1] != 255:
        levels.append(255)
    levels = np.asarray(levels, dtype=np.int64)
    r, g, b = np.meshgrid(levels, levels, levels, indexing="ij")
    srgb = np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)
    return ColorSet(srgb=srgb, lab=srgb_to_lab(srgb))


def pack_srgb(rgb) -> np.ndarray:
    """Pack (..., 3) channel values into 24-bit integers (r<<16 | g<<8 | b)."""
    rgb = np.asarray(rgb, dtype=np.int64)
    return (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]


def unpack_srgb(packed) -> np.ndarray:
    """Inverse of :func:`pack_srgb`; returns an (..., 3) integer array."""
    packed = np.asarray(packed, dtype=np.int64)
    return np.stack([(packed >> 16) & 0xFF, (packed >> 8) & 0xFF, packed & 0xFF],
                    axis=-1)
