"""Topological shape and color descriptors for object recognition.

The package builds a network of coarse color regions from the sRGB cube,
turns colored point clouds into fixed-length descriptors (slice persistence
images, optionally interleaved with color-region embeddings), and trains a
pair of softmax classifiers whose fused prediction is robust to partial
occlusion. See the command-line interface (``toporec --help``) for the
end-to-end workflow.
"""

from .classifier import MlpModel, TrainConfig, forward, fuse_predictions, load_model, mlp_init, save_model, train
from .cloud import (
    CameraIntrinsics,
    PointCloud,
    backproject,
    detect_occlusion,
    mirror_augment,
    remove_outliers,
    reorient_if_occluded,
    rotate_for_slicing,
    scale_cloud,
    slice_cloud,
    strips,
    view_normalize,
    voxel_downsample,
)
from .colors import ColorSet, hyab, lab_to_srgb, sample_srgb_grid, srgb_to_lab
from .descriptor import (
    Descriptor,
    DescriptorConfig,
    color_embedding,
    color_matrix,
    color_vector,
    descriptor_pair,
    tops2_descriptor,
    tops_descriptor,
)
from .errors import DataError, DescriptorOverflowError, EmptyCloudError, InvariantError, ToporecError
from .mapper import Cover, MapperGraph, RefinedCluster, build_cover, dbscan, nerve, refined_pullback
from .network import ColorNetwork, ColorNode, NetworkParams, build_grid_network, chroma_hue_lens, generate_color_network
from .pipeline import PipelineConfig, RecognitionResult, desk_config
from .synth import CameraGrid, ColorScheme, ShapeSpec, occlude, render_view, two_tone, uniform
from .topology import Filtration, PersistenceDiagram, h0_persistence, persistence_image, slice_filtration

__version__ = "0.1.0"
