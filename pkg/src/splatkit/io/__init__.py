"""Serialization: splat PLY, COLMAP sparse models, and dataset assembly."""

from .colmap import ColmapImage, SparseModel, read_colmap_sparse
from .dataset import TrainingDataset, TrainingView, assemble_dataset
from .ply import (
    load_splat_ply,
    read_splat_ply,
    save_splat_ply,
    write_splat_ply,
    write_splat_ply_ascii,
)

__all__ = [
    "ColmapImage",
    "SparseModel",
    "TrainingDataset",
    "TrainingView",
    "assemble_dataset",
    "read_colmap_sparse",
    "load_splat_ply",
    "read_splat_ply",
    "save_splat_ply",
    "write_splat_ply",
    "write_splat_ply_ascii",
]
