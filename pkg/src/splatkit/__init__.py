"""splatkit: capture-to-render 3D Gaussian splatting toolkit.

Core pieces: a splat scene model, splat-PLY and COLMAP readers/writers, a
tiled CPU rasterizer with analytic gradients, an adaptive-density trainer,
a reconstruction job service, and a CLI.
"""

from .camera import Camera, CameraIntrinsics, OrbitPath, look_at_camera
from .errors import (
    ColmapParseError,
    DanglingReferenceError,
    DatasetError,
    InsufficientSeedError,
    InvalidParameterError,
    ParseError,
    PlyParseError,
    PlySchemaError,
    PlyTruncationError,
    ServiceError,
    SplatkitError,
    TrainCancelled,
    TrainDivergedError,
    UnsupportedCameraModelError,
)
from .image import ImageBuffer
from .io import (
    SparseModel,
    TrainingDataset,
    assemble_dataset,
    read_colmap_sparse,
    load_splat_ply,
    read_splat_ply,
    save_splat_ply,
    write_splat_ply,
    write_splat_ply_ascii,
)
from .model import Splat, SplatCloud, activate_opacity, covariance3d, eval_sh
from .render import RenderStats, depth_sort, project_cloud, project_splat, render, render_reference

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "CameraIntrinsics",
    "ColmapParseError",
    "DanglingReferenceError",
    "DatasetError",
    "ImageBuffer",
    "InsufficientSeedError",
    "InvalidParameterError",
    "OrbitPath",
    "ParseError",
    "PlyParseError",
    "PlySchemaError",
    "PlyTruncationError",
    "RenderStats",
    "ServiceError",
    "Splat",
    "activate_opacity",
    "covariance3d",
    "eval_sh",
    "SplatCloud",
    "SplatkitError",
    "SparseModel",
    "TrainCancelled",
    "TrainDivergedError",
    "TrainingDataset",
    "UnsupportedCameraModelError",
    "assemble_dataset",
    "depth_sort",
    "look_at_camera",
    "project_cloud",
    "project_splat",
    "read_colmap_sparse",
    "load_splat_ply",
    "read_splat_ply",
    "save_splat_ply",
    "render",
    "render_reference",
    "write_splat_ply",
    "write_splat_ply_ascii",
    "__version__",
]
