"""Differentiable training: losses, gradients, Adam, adaptive density control."""

from .adam import AdamOptimizer
from .backward import CloudGradients, backward
from .config import TrainConfig, load_train_config
from .densify import densify_and_prune, scene_extent, seed_from_points
from .losses import loss, loss_with_grad, psnr, ssim
from .trainer import CheckpointRecord, TrainReport, train

__all__ = [
    "AdamOptimizer",
    "CheckpointRecord",
    "CloudGradients",
    "TrainConfig",
    "TrainReport",
    "backward",
    "densify_and_prune",
    "load_train_config",
    "loss",
    "loss_with_grad",
    "psnr",
    "scene_extent",
    "seed_from_points",
    "ssim",
    "train",
]
