"""Projection of 3D Gaussians to screen-space 2D Gaussians."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..camera import Camera
from ..model import MAX_SH_DEGREE, SplatCloud, num_sh_coeffs, sh_basis

# Low-pass blur added to every projected covariance, in pixels^2.
BLUR = 0.3
# Per-pixel contributions below this are skipped during compositing.
ALPHA_SKIP = 1.0 / 255.0
# Mahalanobis^2 beyond which exp(-m/2) alone falls under ALPHA_SKIP; since
# alpha < 1, pixels outside this ellipse can never contribute, so using it
# (instead of the visual 3-sigma radius) for binning keeps the tiled pass
# exactly equal to the brute-force reference.
CONTRIBUTION_MAHALANOBIS_SQ = 2.0 * math.log(255.0)
_BBOX_SIGMA = math.sqrt(CONTRIBUTION_MAHALANOBIS_SQ)  # ~3.33
_BBOX_MARGIN = 1.0  # pixels of slack against boundary rounding


@dataclass
class ProjectedSplat:
    """A single splat after projection (None/culled when invisible)."""

    mean2d: np.ndarray  # (2,) pixels
    cov2d: np.ndarray  # (2, 2) pixels^2, blur included
    depth: float  # camera-space z
    rgb: np.ndarray  # (3,)
    alpha: float
    radius: int  # ceil(3 sigma_max) in pixels


@dataclass
class ProjectionResult:
    """Visible splats of a cloud, flattened to arrays (camera-frame order = cloud order)."""

    indices: np.ndarray  # (M,) int, rows of the source cloud
    mean2d: np.ndarray  # (M, 2)
    cov2d: np.ndarray  # (M, 2, 2)
    conic: np.ndarray  # (M, 2, 2) inverse covariances
    depth: np.ndarray  # (M,)
    rgb: np.ndarray  # (M, 3) clamped colors
    rgb_raw: np.ndarray  # (M, 3) pre-clamp colors (for gradients)
    alpha: np.ndarray  # (M,)
    radius: np.ndarray  # (M,) int
    bbox: np.ndarray  # (M, 4) [xmin, xmax, ymin, ymax], contribution bounds
    p_cam: np.ndarray  # (M, 3) camera-space positions
    total: int  # splat count of the source cloud

    def __len__(self) -> int:
        return self.indices.shape[0]


def depth_sort(depths: np.ndarray) -> np.ndarray:
    """Permutation sorting ascending by depth; ties keep original order."""
    return np.argsort(np.asarray(depths), kind="stable")


def perspective_jacobians(p_cam: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """d(pixel)/d(camera point) at each camera-space position, shape (M, 2, 3)."""
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    inv_z = 1.0 / z
    j = np.zeros((p_cam.shape[0], 2, 3), dtype=np.float64)
    j[:, 0, 0] = fx * inv_z
    j[:, 0, 2] = -fx * x * inv_z * inv_z
    j[:, 1, 1] = fy * inv_z
    j[:, 1, 2] = -fy * y * inv_z * inv_z
    return j


def project_cloud(
    cloud: SplatCloud,
    camera: Camera,
    cull_offscreen: bool = True,
    cull_dim_alpha: bool = True,
) -> ProjectionResult:
    """Project every splat; keep the ones that can contribute to the image.

    Culls splats behind the near plane, with non-finite projected values,
    with alpha below the per-pixel skip threshold (`cull_dim_alpha`), and
    whose contribution bound misses the image rectangle (`cull_offscreen`).
    Both optional culls remove only splats whose every per-pixel
    contribution would fall under the skip threshold anyway.
    """
    intr = camera.intrinsics
    n = len(cloud)
    if n == 0:
        return ProjectionResult(
            indices=np.zeros(0, dtype=np.int64),
            mean2d=np.zeros((0, 2)),
            cov2d=np.zeros((0, 2, 2)),
            conic=np.zeros((0, 2, 2)),
            depth=np.zeros(0),
            rgb=np.zeros((0, 3)),
            rgb_raw=np.zeros((0, 3)),
            alpha=np.zeros(0),
            radius=np.zeros(0, dtype=np.int64),
            bbox=np.zeros((0, 4)),
            p_cam=np.zeros((0, 3)),
            total=0,
        )

    p_cam = cloud.positions @ camera.rotation.T + camera.translation
    depth = p_cam[:, 2]
    in_front = depth > camera.near_plane

    # work only on in-front splats from here on
    idx = np.nonzero(in_front)[0]
    p = p_cam[idx]
    z = p[:, 2]
    mean2d = np.stack([intr.fx * p[:, 0] / z + intr.cx, intr.fy * p[:, 1] / z + intr.cy], axis=1)

    j = perspective_jacobians(p, intr.fx, intr.fy)
    m = j @ camera.rotation  # (M, 2, 3)
    sigma3 = cloud.covariances()[idx]
    cov2d = np.einsum("mij,mjk,mlk->mil", m, sigma3, m)
    cov2d[:, 0, 0] += BLUR
    cov2d[:, 1, 1] += BLUR

    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b

    alpha = cloud.opacities()[idx]
    finite = (
        np.isfinite(mean2d).all(axis=1)
        & np.isfinite(cov2d).all(axis=(1, 2))
        & (det > 0)
        & (a > 0)
        & (c > 0)
    )
    keep = finite & (alpha >= ALPHA_SKIP) if cull_dim_alpha else finite.copy()

    # extent of the region that can pass the per-pixel skip test
    half_x = _BBOX_SIGMA * np.sqrt(np.maximum(a, 0.0)) + _BBOX_MARGIN
    half_y = _BBOX_SIGMA * np.sqrt(np.maximum(c, 0.0)) + _BBOX_MARGIN
    xmin = mean2d[:, 0] - half_x
    xmax = mean2d[:, 0] + half_x
    ymin = mean2d[:, 1] - half_y
    ymax = mean2d[:, 1] + half_y
    if cull_offscreen:
        keep &= (xmax > 0) & (xmin < intr.width) & (ymax > 0) & (ymin < intr.height)

    sel = np.nonzero(keep)[0]
    idx = idx[sel]
    p = p[sel]
    mean2d = mean2d[sel]
    cov2d = cov2d[sel]
    a, b, c, det = a[sel], b[sel], c[sel], det[sel]
    alpha = alpha[sel]
    bbox = np.stack([xmin[sel], xmax[sel], ymin[sel], ymax[sel]], axis=1)

    conic = np.empty_like(cov2d)
    inv_det = 1.0 / det
    conic[:, 0, 0] = c * inv_det
    conic[:, 0, 1] = -b * inv_det
    conic[:, 1, 0] = -b * inv_det
    conic[:, 1, 1] = a * inv_det

    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radius = np.ceil(3.0 * np.sqrt(np.maximum(lam_max, 0.0))).astype(np.int64)

    # view-dependent color from the camera center toward each splat
    view_dir = p / np.linalg.norm(p, axis=1, keepdims=True)
    view_dir_world = view_dir @ camera.rotation  # R^T applied row-wise
    k = num_sh_coeffs(cloud.active_sh_degree)
    basis = sh_basis(view_dir_world, cloud.active_sh_degree) if len(idx) else np.zeros((0, k))
    rgb_raw = np.einsum("nck,nk->nc", cloud.sh_coeffs[idx][:, :, :k], basis) + 0.5
    rgb = np.maximum(rgb_raw, 0.0)

    return ProjectionResult(
        indices=idx,
        mean2d=mean2d,
        cov2d=cov2d,
        conic=conic,
        depth=p[:, 2],
        rgb=rgb,
        rgb_raw=rgb_raw,
        alpha=alpha,
        radius=radius,
        bbox=bbox,
        p_cam=p,
        total=n,
    )


def project_splat(splat, camera: Camera) -> ProjectedSplat | None:
    """Project a single splat; None when culled."""
    cloud = SplatCloud(
        positions=splat.position[None, :],
        log_scales=splat.log_scale[None, :],
        rotations=splat.rotation[None, :],
        opacity_logits=np.array([splat.opacity_logit]),
        sh_coeffs=splat.sh_coeffs[None, :, :],
        active_sh_degree=MAX_SH_DEGREE,
    )
    proj = project_cloud(cloud, camera, cull_dim_alpha=False)
    if len(proj) == 0:
        return None
    return ProjectedSplat(
        mean2d=proj.mean2d[0],
        cov2d=proj.cov2d[0],
        depth=float(proj.depth[0]),
        rgb=proj.rgb[0],
        alpha=float(proj.alpha[0]),
        radius=int(proj.radius[0]),
    )
