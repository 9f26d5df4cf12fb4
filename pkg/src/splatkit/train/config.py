"""Training configuration and its YAML loader."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..errors import InvalidParameterError


@dataclass
class TrainConfig:
    """Hyperparameters for the adaptive-density training loop."""

    iterations: int = 30000
    lr_position: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_sh: float = 2.5e-3
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lambda_dssim: float = 0.2
    densify_interval: int = 100
    densify_from: int = 500
    densify_until: int = 15000
    grad_threshold: float = 2e-4  # mean screen gradient, NDC units
    split_scale_ratio: float = 0.01  # of scene extent; clone below, split above
    split_scale_threshold: float | None = None  # absolute override, scene units
    prune_opacity: float = 0.005
    opacity_reset_interval: int = 3000
    sh_promote_interval: int = 1000
    max_screen_radius: float = 20.0  # prune cap, px, active after first opacity reset
    seed: int = 0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    downscale: float = 1.0
    tile_size: int = 16
    workers: int = 1
    checkpoint_interval: int = 1000
    holdout_every: int = 0  # reserve every nth view for held-out PSNR; 0 = none

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidParameterError(f"iterations must be >= 0, got {self.iterations}")
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise InvalidParameterError(f"lambda_dssim must be in [0, 1], got {self.lambda_dssim}")
        for name in (
            "grad_threshold",
            "split_scale_ratio",
            "prune_opacity",
            "max_screen_radius",
            "densify_interval",
            "opacity_reset_interval",
            "sh_promote_interval",
            "checkpoint_interval",
        ):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.densify_from >= self.densify_until:
            raise InvalidParameterError(
                f"densify_from ({self.densify_from}) must be below densify_until ({self.densify_until})"
            )
        if self.downscale < 1.0:
            raise InvalidParameterError(f"downscale must be >= 1, got {self.downscale}")
        self.background = tuple(float(v) for v in self.background)
        if len(self.background) != 3:
            raise InvalidParameterError("background must have 3 channels")

    def position_lr_at(self, iteration: int) -> float:
        """Exponential decay from lr_position to lr_position_final over the run."""
        if self.iterations <= 0:
            return self.lr_position
        t = min(max(iteration / self.iterations, 0.0), 1.0)
        return self.lr_position * (self.lr_position_final / self.lr_position) ** t

    def lrs_at(self, iteration: int) -> dict[str, float]:
        return {
            "position": self.position_lr_at(iteration),
            "log_scale": self.lr_scale,
            "rotation": self.lr_rotation,
            "opacity": self.lr_opacity,
            "sh_dc": self.lr_sh,
            # higher-order coefficients step slower than DC
            "sh_rest": self.lr_sh / 20.0,
        }


def load_train_config(path: str | Path, **overrides) -> TrainConfig:
    """Build a TrainConfig from a YAML mapping, with keyword overrides on top."""
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InvalidParameterError(f"config file {path} must hold a mapping")
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
    raw.update(overrides)
    return TrainConfig(**raw)
