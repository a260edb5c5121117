"""PNG I/O for depth, RGB, and instance-segmentation images.

Depth images are 16-bit single-channel (integer depth units), RGB images
8-bit three-channel, segmentation maps single-channel instance ids with 0
reserved for background (8-bit when ids fit, 16-bit otherwise).
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DataError


def write_depth_png(path, depth: np.ndarray) -> None:
    arr = np.asarray(depth)
    if arr.ndim != 2:
        raise DataError("depth image must be single-channel")
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise DataError("depth values exceed the 16-bit range")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def read_depth_png(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DataError(f"{path}: expected single-channel depth image")
    return arr.astype(np.uint16)


def write_rgb_png(path, rgb: np.ndarray) -> None:
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError("RGB image must be (H, W, 3)")
    Image.fromarray(arr.astype(np.uint8), mode="RGB").save(path)


def read_rgb_png(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def write_segmentation_png(path, seg: np.ndarray) -> None:
    arr = np.asarray(seg)
    if arr.ndim != 2:
        raise DataError("segmentation map must be single-channel")
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise DataError("instance ids exceed the 16-bit range")
    if arr.max() <= 0xFF:
        Image.fromarray(arr.astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray(arr.astype(np.uint16)).save(path)


def read_segmentation_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise DataError(f"{path}: expected single-channel segmentation map")
    return arr.astype(np.int64)
