"""Seeding from sparse points and adaptive density control (clone/split/prune)."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InsufficientSeedError
from ..model import NUM_SH_COEFFS, SH_C0, SplatCloud, logit, quat_to_rotmat
from ..render.forward import RenderStats
from .config import TrainConfig

MIN_SEED_POINTS = 4
_MIN_NN_DISTANCE = 1e-7  # floor against duplicate points collapsing scales


def scene_extent(camera_centers: np.ndarray) -> float:
    """Radius of the camera-center bounding sphere (centered on their mean)."""
    centers = np.asarray(camera_centers, dtype=np.float64).reshape(-1, 3)
    if centers.shape[0] == 0:
        return 1.0
    centroid = centers.mean(axis=0)
    radius = float(np.linalg.norm(centers - centroid, axis=1).max())
    return radius if radius > 0.0 else 1.0


def mean_neighbor_distance(xyz: np.ndarray, k: int = 3) -> np.ndarray:
    """Per point: mean distance to its k nearest other points."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    tree = cKDTree(xyz)
    # first hit is the point itself
    dists, _ = tree.query(xyz, k=k + 1)
    return dists[:, 1:].mean(axis=1)


def seed_from_points(points_xyz: np.ndarray, points_rgb: np.ndarray) -> SplatCloud:
    """One isotropic splat per sparse point.

    DC coefficient inverts the band-0 shading convention; scale comes from
    the mean distance to the 3 nearest neighbors; opacity starts at 0.1.
    """
    xyz = np.asarray(points_xyz, dtype=np.float64).reshape(-1, 3)
    rgb = np.asarray(points_rgb, dtype=np.float64).reshape(-1, 3)
    n = xyz.shape[0]
    if n < MIN_SEED_POINTS:
        raise InsufficientSeedError(f"need at least {MIN_SEED_POINTS} seed points, got {n}")

    dc = (rgb / 255.0 - 0.5) / SH_C0
    sh = np.zeros((n, 3, NUM_SH_COEFFS))
    sh[:, :, 0] = dc

    nn = np.maximum(mean_neighbor_distance(xyz, k=3), _MIN_NN_DISTANCE)
    log_scales = np.repeat(np.log(nn)[:, None], 3, axis=1)

    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0

    return SplatCloud(
        positions=xyz,
        log_scales=log_scales,
        rotations=rotations,
        opacity_logits=np.full(n, logit(0.1)),
        sh_coeffs=sh,
        active_sh_degree=0,
    )


def densify_and_prune(
    cloud: SplatCloud,
    stats: RenderStats,
    config: TrainConfig,
    extent: float,
    rng: np.random.Generator,
    enable_radius_prune: bool = False,
) -> tuple[SplatCloud, np.ndarray, int]:
    """One density-control round.

    Splats whose mean screen-space gradient exceeds the threshold are
    densified: small ones (max scale under the size threshold) are cloned
    with the copy nudged along the accumulated descent direction; large ones
    are split into 2 samples of their own Gaussian with scales shrunk by
    1.6, removing the original. Splats with activated opacity under
    prune_opacity (and, when enabled, screen radius over the cap) are
    dropped.

    Consumes `rng` once: a (num_split, 2, 3) standard-normal draw in cloud
    row order. Returns (new cloud, kept original row indices, appended count)
    so optimizer state can be remapped.
    """
    n = len(cloud)
    denom = np.maximum(stats.seen, 1)
    mean_grad = stats.grad2d_norm / denom

    size_threshold = (
        config.split_scale_threshold
        if config.split_scale_threshold is not None
        else config.split_scale_ratio * extent
    )
    max_scale = cloud.scales().max(axis=1)
    hot = (mean_grad > config.grad_threshold) & (stats.seen > 0)
    clone_mask = hot & (max_scale < size_threshold)
    split_mask = hot & ~clone_mask

    prune_mask = cloud.opacities() < config.prune_opacity
    if enable_radius_prune:
        prune_mask |= stats.max_radius > config.max_screen_radius

    keep_mask = ~(prune_mask | split_mask)
    keep_idx = np.nonzero(keep_mask)[0]
    parts = [cloud.select(keep_idx)]

    # clones keep all parameters; the copy steps along the accumulated
    # descent direction by half the mean activated scale
    clone_idx = np.nonzero(clone_mask & ~prune_mask)[0]
    if clone_idx.size:
        clones = cloud.select(clone_idx)
        grad_dir = stats.grad_pos_world[clone_idx]
        norms = np.linalg.norm(grad_dir, axis=1, keepdims=True)
        step = np.where(norms > 0, -grad_dir / np.maximum(norms, 1e-30), 0.0)
        clones.positions = clones.positions + step * (0.5 * clones.scales().mean(axis=1, keepdims=True))
        parts.append(clones)

    split_idx = np.nonzero(split_mask & ~prune_mask)[0]
    if split_idx.size:
        normals = rng.standard_normal((split_idx.size, 2, 3))
        base = cloud.select(split_idx)
        rot = quat_to_rotmat(base.rotations)  # (S, 3, 3)
        local = normals * base.scales()[:, None, :]  # (S, 2, 3)
        offsets = np.einsum("sij,skj->ski", rot, local)
        children = []
        for sample in range(2):
            child = base.copy()
            child.positions = base.positions + offsets[:, sample, :]
            child.log_scales = base.log_scales - np.log(1.6)
            children.append(child)
        parts.append(SplatCloud.concatenate(children))

    new_cloud = SplatCloud.concatenate(parts) if len(parts) > 1 else parts[0]
    appended = len(new_cloud) - keep_idx.size
    return new_cloud, keep_idx, appended
