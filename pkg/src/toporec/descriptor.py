"""Fixed-length shape and shape+color descriptors of normalized clouds.

The shape channel stacks the vectorized persistence images of the z slices
of a tilted cloud. The combined descriptor interleaves, per slice, the
persistence image with a color embedding: strip-wise color-region counts
multiplied through the network's similarity matrix. Both descriptors are
zero-padded to a configured slice count so a single classifier can consume
them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, flatten_slice_z, rotate_for_slicing, slice_cloud, strips
from .errors import DescriptorOverflowError, EmptyCloudError
from .network import ColorNetwork
from .topology import h0_persistence, persistence_image, slice_filtration

KIND_TOPS = "tops"
KIND_TOPS2 = "tops2"
_KIND_CODES = {KIND_TOPS: 1, KIND_TOPS2: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_MAGIC = b"TDSC"
_VERSION = 1


@dataclass(frozen=True)
class DescriptorConfig:
    """Geometry and rasterization parameters shared by both descriptors."""

    sigma1: float = 0.1
    sigma2: float = 2.5e-2
    alpha: float = np.pi / 4
    max_slices: int = 12
    n_s_max: int = 31
    pi_grid: tuple[int, int] = (16, 16)
    pi_sigma: float = 2.5e-2
    pi_weight: str = "linear"
    filtration_radius: float | None = None  # defaults to 2 * sigma2
    padding: str = "trailing"  # or "centered"

    @property
    def radius(self) -> float:
        return 2.0 * self.sigma2 if self.filtration_radius is None else self.filtration_radius

    @property
    def value_range(self) -> tuple[float, float]:
        return (0.0, self.n_s_max * self.sigma2)

    @property
    def image_len(self) -> int:
        return self.pi_grid[0] * self.pi_grid[1]

    def block_len(self, kind: str, n_regions: int) -> int:
        if kind == KIND_TOPS:
            return self.image_len
        return self.image_len + n_regions * self.n_s_max


@dataclass(frozen=True)
class Descriptor:
    """Flat descriptor vector plus the layout needed to slice it back up."""

    kind: str
    vector: np.ndarray
    max_slices: int
    block_len: int
    n_slices: int  # slices actually populated before padding

    def blocks(self) -> np.ndarray:
        return self.vector.reshape(self.max_slices, self.block_len)

    def save(self, path) -> None:
        header = struct.pack("<4sHBIII", _MAGIC, _VERSION,
                             _KIND_CODES[self.kind], self.max_slices,
                             self.block_len, self.n_slices)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.vector.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "Descriptor":
        with open(path, "rb") as fh:
            data = fh.read()
        head = struct.calcsize("<4sHBIII")
        magic, version, code, max_slices, block_len, n_slices = struct.unpack(
            "<4sHBIII", data[:head])
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a descriptor file")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = np.frombuffer(data[head:], dtype="<f4").astype(np.float64)
        if len(payload) != max_slices * block_len:
            raise ValueError(f"{path}: truncated payload")
        return cls(kind=_CODE_KINDS[code], vector=payload, max_slices=max_slices,
                   block_len=block_len, n_slices=n_slices)

    def dump_text(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"descriptor kind={self.kind} max_slices={self.max_slices} "
                     f"block_len={self.block_len} n_slices={self.n_slices}\n")
            for i, block in enumerate(self.blocks()):
                fh.write(f"slice {i} " + " ".join(f"{x:.6g}" for x in block) + "\n")


def color_vector(colors: np.ndarray, network: ColorNetwork) -> np.ndarray:
    """Region-count vector of a strip's colors.

    Each point contributes total mass 1, split evenly over the regions that
    contain its color, so the entries sum to the point count.
    """
    return _accumulate_regions(network.batch_regions(colors), network.n_regions)


def _accumulate_regions(region_lists, n_regions: int) -> np.ndarray:
    out = np.zeros(n_regions)
    for regions in region_lists:
        share = 1.0 / len(regions)
        for r in regions:
            out[r] += share
    return out


def color_matrix(cloud: PointCloud, slc, sigma2: float, n_s_max: int,
                 network: ColorNetwork, padding: str = "trailing") -> np.ndarray:
    """Stack a slice's strip color vectors into an (n_s_max, n_c) matrix.

    Rows beyond the slice's strip count are zero; ``padding`` places the
    populated rows first (trailing zeros) or centers them.
    """
    strips_list = strips(cloud, slc, sigma2)
    n_s = len(strips_list)
    if n_s > n_s_max:
        raise DescriptorOverflowError(
            f"slice {slc.index} has {n_s} strips, exceeding the configured "
            f"maximum of {n_s_max}")
    matrix = np.zeros((n_s_max, network.n_regions))
    if padding == "trailing":
        offset = 0
    elif padding == "centered":
        offset = (n_s_max - n_s) // 2
    else:
        raise ValueError(f"unknown padding scheme: {padding!r}")
    # one batched membership lookup for the whole slice
    slice_regions = network.batch_regions(cloud.colors[slc.member_ids])
    by_id = dict(zip(slc.member_ids.tolist(), slice_regions))
    for strip in strips_list:
        matrix[offset + strip.index] = _accumulate_regions(
            [by_id[i] for i in strip.member_ids.tolist()], network.n_regions)
    return matrix


def color_embedding(matrix: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Embed a color matrix through the similarity matrix: (C @ delta)^T."""
    matrix = np.asarray(matrix)
    delta = np.asarray(delta)
    if matrix.shape[1] != delta.shape[0]:
        raise ValueError(f"color matrix width {matrix.shape[1]} does not match "
                         f"similarity matrix size {delta.shape[0]}")
    return (matrix @ delta).T


def _slice_blocks(cloud: PointCloud, cfg: DescriptorConfig,
                  network: ColorNetwork | None):
    """Shared per-slice computation; yields (image_vec, embedding_vec|None)."""
    if len(cloud) == 0:
        raise EmptyCloudError("cannot compute a descriptor of an empty cloud")
    tilted = rotate_for_slicing(cloud, cfg.alpha)
    slices = slice_cloud(tilted, cfg.sigma1)
    if len(slices) > cfg.max_slices:
        raise DescriptorOverflowError(
            f"cloud yields {len(slices)} slices, exceeding the configured "
            f"maximum of {cfg.max_slices}")
    blocks = []
    for slc in slices:
        if len(slc.member_ids) == 0:
            image = np.zeros(cfg.pi_grid)
            embedding = (np.zeros((network.n_regions, cfg.n_s_max))
                         if network is not None else None)
        else:
            flat = flatten_slice_z(tilted, slc, cfg.sigma1)
            filtration = slice_filtration(flat.points, cfg.radius)
            cap = float(flat.points[:, 0].max()) + cfg.sigma2
            diagram = h0_persistence(filtration, cap)
            image = persistence_image(diagram, cfg.pi_grid, cfg.value_range,
                                      cfg.value_range, cfg.pi_sigma, cfg.pi_weight)
            embedding = None
            if network is not None:
                matrix = color_matrix(tilted, slc, cfg.sigma2, cfg.n_s_max,
                                      network, cfg.padding)
                embedding = color_embedding(matrix, network.delta)
        blocks.append((image.ravel(),
                       embedding.ravel() if embedding is not None else None))
    return blocks


def _assemble(blocks, cfg: DescriptorConfig, kind: str, n_regions: int) -> Descriptor:
    block_len = cfg.block_len(kind, n_regions)
    vector = np.zeros(cfg.max_slices * block_len)
    for i, (image, embedding) in enumerate(blocks):
        part = image if kind == KIND_TOPS else np.concatenate([image, embedding])
        vector[i * block_len:(i + 1) * block_len] = part
    return Descriptor(kind=kind, vector=vector, max_slices=cfg.max_slices,
                      block_len=block_len, n_slices=len(blocks))


def tops_descriptor(cloud: PointCloud, cfg: DescriptorConfig) -> Descriptor:
    """Shape-only descriptor: stacked per-slice persistence images."""
    blocks = _slice_blocks(cloud, cfg, network=None)
    return _assemble(blocks, cfg, KIND_TOPS, 0)


def tops2_descriptor(cloud: PointCloud, network: ColorNetwork,
                     cfg: DescriptorConfig) -> Descriptor:
    """Shape+color descriptor: per-slice persistence image then embedding."""
    blocks = _slice_blocks(cloud, cfg, network)
    return _assemble(blocks, cfg, KIND_TOPS2, network.n_regions)


def descriptor_pair(cloud: PointCloud, network: ColorNetwork,
                    cfg: DescriptorConfig) -> tuple[Descriptor, Descriptor]:
    """Both descriptors of one cloud, sharing the slicing and persistence work."""
    blocks = _slice_blocks(cloud, cfg, network)
    tops = _assemble(blocks, cfg, KIND_TOPS, 0)
    tops2 = _assemble(blocks, cfg, KIND_TOPS2, network.n_regions)
    return tops, tops2
