"""The training loop: render, differentiate, step, adapt density."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import InvalidParameterError, TrainCancelled, TrainDivergedError
from ..io.dataset import TrainingDataset, TrainingView
from ..model import MAX_SH_DEGREE, SplatCloud, logit
from ..render.forward import RenderStats, render
from .adam import AdamOptimizer
from .backward import backward
from .config import TrainConfig
from .densify import densify_and_prune, scene_extent, seed_from_points
from .losses import loss as loss_fn
from .losses import psnr as psnr_fn


@dataclass
class CheckpointRecord:
    iteration: int
    count: int
    loss: float
    psnr: float
    elapsed_s: float
    psnr_holdout: float | None = None

    def metrics_line(self) -> str:
        return f"{self.iteration} {self.count} {self.loss:.6f} {self.psnr:.4f} {self.elapsed_s:.3f}"


@dataclass
class TrainReport:
    checkpoints: list[CheckpointRecord] = field(default_factory=list)
    stage_seconds: dict[str, float] = field(default_factory=dict)
    diverged: bool = False

    def metrics_log(self) -> str:
        """One `iter count loss psnr elapsed_s` line per checkpoint."""
        return "\n".join(c.metrics_line() for c in self.checkpoints) + "\n"

    @property
    def final_psnr(self) -> float:
        return self.checkpoints[-1].psnr if self.checkpoints else math.nan


ProgressCallback = Callable[[int, int], object]


def _split_views(dataset: TrainingDataset, holdout_every: int):
    if holdout_every <= 0:
        return list(dataset.views), []
    train_views: list[TrainingView] = []
    holdout: list[TrainingView] = []
    for i, view in enumerate(dataset.views):
        (holdout if (i + 1) % holdout_every == 0 else train_views).append(view)
    if not train_views:
        train_views, holdout = holdout, []
    return train_views, holdout


def _mean_metrics(cloud: SplatCloud, views: list[TrainingView], config: TrainConfig):
    """Mean loss and PSNR of the current cloud over the given views."""
    if not views:
        return math.nan, math.nan
    losses = []
    psnrs = []
    for view in views:
        image, _ = render(cloud, view.camera, config.background, config.tile_size, config.workers)
        losses.append(loss_fn(image, view.image, config.lambda_dssim))
        psnrs.append(psnr_fn(image, view.image))
    return float(np.mean(losses)), float(np.mean(psnrs))


def train(
    dataset: TrainingDataset,
    config: TrainConfig,
    initial_cloud: SplatCloud | None = None,
    on_progress: ProgressCallback | None = None,
) -> tuple[SplatCloud, TrainReport]:
    """Optimize a splat cloud against the dataset's views.

    Views are sampled in seeded shuffled epochs; every `densify_interval`
    iterations inside the densification window the cloud is densified and
    pruned; every `opacity_reset_interval` iterations opacity logits are
    clamped down to logit(0.01); every `sh_promote_interval` iterations the
    active SH degree is raised (up to 3). Checkpoints are recorded at
    iteration 0, every `checkpoint_interval`, and at the end.

    Deterministic for a fixed seed: the run's single RNG is consumed in a
    documented order (epoch shuffle draws when the view queue empties, then
    split-sample draws inside each densify round, chronologically).

    `on_progress(iteration, total)` runs every iteration; returning False
    cancels with TrainCancelled. A non-finite loss aborts with
    TrainDivergedError after recording a diagnostic checkpoint.
    """
    start = time.perf_counter()
    train_views, holdout_views = _split_views(dataset, config.holdout_every)
    if not train_views:
        raise InvalidParameterError("training dataset has no views")

    seed_start = time.perf_counter()
    if initial_cloud is not None:
        cloud = initial_cloud.copy()
    else:
        cloud = seed_from_points(dataset.seed_xyz, dataset.seed_rgb)
    seed_seconds = time.perf_counter() - seed_start

    extent = scene_extent(dataset.camera_centers())
    rng = np.random.default_rng(config.seed)
    optimizer = AdamOptimizer(cloud)
    stats_accum = RenderStats.zeros(len(cloud))
    report = TrainReport()
    radius_prune_on = False
    densify_until = min(config.densify_until, config.iterations)

    def checkpoint(iteration: int) -> None:
        mean_loss, mean_psnr = _mean_metrics(cloud, train_views, config)
        record = CheckpointRecord(
            iteration=iteration,
            count=len(cloud),
            loss=mean_loss,
            psnr=mean_psnr,
            elapsed_s=time.perf_counter() - start,
        )
        if holdout_views:
            record.psnr_holdout = _mean_metrics(cloud, holdout_views, config)[1]
        report.checkpoints.append(record)

    checkpoint(0)

    view_queue: list[int] = []
    optimize_start = time.perf_counter()
    for iteration in range(1, config.iterations + 1):
        if not view_queue:
            view_queue = list(rng.permutation(len(train_views)))
        view = train_views[view_queue.pop(0)]

        value, grads, stats_it, _ = backward(
            cloud,
            view.camera,
            view.image,
            lambda_dssim=config.lambda_dssim,
            background=config.background,
            tile_size=config.tile_size,
        )
        if not math.isfinite(value):
            report.diverged = True
            report.checkpoints.append(
                CheckpointRecord(
                    iteration=iteration,
                    count=len(cloud),
                    loss=value,
                    psnr=math.nan,
                    elapsed_s=time.perf_counter() - start,
                )
            )
            report.stage_seconds = {
                "seed": seed_seconds,
                "optimize": time.perf_counter() - optimize_start,
                "total": time.perf_counter() - start,
            }
            raise TrainDivergedError(f"non-finite loss {value!r} at iteration {iteration}")

        optimizer.step(cloud, grads.groups(), config.lrs_at(iteration))
        stats_accum.merge(stats_it)

        if (
            config.densify_from <= iteration <= densify_until
            and iteration % config.densify_interval == 0
        ):
            cloud, keep_idx, appended = densify_and_prune(
                cloud, stats_accum, config, extent, rng, enable_radius_prune=radius_prune_on
            )
            optimizer.remap(keep_idx, appended)
            stats_accum = RenderStats.zeros(len(cloud))

        if iteration % config.opacity_reset_interval == 0 and iteration < config.iterations:
            np.minimum(cloud.opacity_logits, logit(0.01), out=cloud.opacity_logits)
            optimizer.reset_group("opacity")
            radius_prune_on = True

        if iteration % config.sh_promote_interval == 0:
            cloud.active_sh_degree = min(cloud.active_sh_degree + 1, MAX_SH_DEGREE)

        if iteration % config.checkpoint_interval == 0 or iteration == config.iterations:
            checkpoint(iteration)

        if on_progress is not None and on_progress(iteration, config.iterations) is False:
            raise TrainCancelled(f"training cancelled at iteration {iteration}")

    report.stage_seconds = {
        "seed": seed_seconds,
        "optimize": time.perf_counter() - optimize_start,
        "total": time.perf_counter() - start,
    }
    return cloud, report
