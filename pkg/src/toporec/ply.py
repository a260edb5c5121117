"""PLY point-cloud file I/O.

Writes x/y/z as 32-bit floats and red/green/blue as 8-bit integers, in
ASCII or binary little-endian form. The reader tolerates extra vertex
properties and either channel naming order, but requires the six standard
properties to be present.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .errors import DataError

_PROPERTY_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}
_NUMPY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def write_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    pts = cloud.points.astype(np.float32)
    cols = cloud.colors.astype(np.uint8)
    if binary:
        rec = np.empty(len(cloud), dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                          ("r", "u1"), ("g", "u1"), ("b", "u1")])
        rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
        rec["r"], rec["g"], rec["b"] = cols[:, 0], cols[:, 1], cols[:, 2]
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(rec.tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(header)
            for p, c in zip(pts, cols):
                fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {c[0]} {c[1]} {c[2]}\n")


def read_ply(path) -> PointCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise DataError(f"{path}: not a PLY file")
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    n_vertex = None
    properties: list[tuple[str, str]] = []
    element = None
    for line in header_lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                n_vertex = int(parts[2])
        elif parts[0] == "property" and element == "vertex":
            if parts[1] == "list":
                raise DataError(f"{path}: list properties unsupported on vertices")
            properties.append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"{path}: unsupported format {fmt}")
    if n_vertex is None:
        raise DataError(f"{path}: missing vertex element")
    names = [name for name, _ in properties]
    needed = ("x", "y", "z", "red", "green", "blue")
    for want in needed:
        if want not in names:
            raise DataError(f"{path}: vertex property {want} missing")

    if fmt == "ascii":
        rows = body.decode("ascii").split()
        stride = len(properties)
        if len(rows) < n_vertex * stride:
            raise DataError(f"{path}: truncated vertex data")
        table = np.asarray(rows[:n_vertex * stride], dtype=np.float64)
        table = table.reshape(n_vertex, stride)
        cols = {name: table[:, k] for k, (name, _) in enumerate(properties)}
    else:
        dtype = np.dtype([(name, "<" + _NUMPY_TYPES[typ]) for name, typ in properties])
        if len(body) < n_vertex * dtype.itemsize:
            raise DataError(f"{path}: truncated vertex data")
        rec = np.frombuffer(body, dtype=dtype, count=n_vertex)
        cols = {name: rec[name].astype(np.float64) for name, _ in properties}

    points = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    colors = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1)
    return PointCloud(points=points, colors=np.clip(colors, 0, 255).astype(np.uint8))
