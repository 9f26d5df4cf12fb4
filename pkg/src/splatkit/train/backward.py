"""Analytic gradients of the photometric loss through the tiled rasterizer.

The backward pass re-runs projection and per-tile compositing (storing
nothing per pixel across tiles), walks the compositing chain in reverse
using the forward transmittances, and chains screen-space gradients back to
every raw splat parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import Camera
from ..image import ImageBuffer
from ..model import NUM_SH_COEFFS, SplatCloud, num_sh_coeffs, quat_to_rotmat, sh_basis, sh_basis_grad
from ..render.forward import (
    ALPHA_CLAMP,
    T_TERMINATE,
    TILE_SIZE,
    RenderStats,
    bin_splats_to_tiles,
    composite_pixels,
)
from ..render.projection import ALPHA_SKIP, depth_sort, perspective_jacobians, project_cloud
from .losses import loss_with_grad


@dataclass
class CloudGradients:
    """Gradients of the loss w.r.t. every raw parameter array of a cloud."""

    positions: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "CloudGradients":
        return cls(
            positions=np.zeros((n, 3)),
            log_scales=np.zeros((n, 3)),
            rotations=np.zeros((n, 4)),
            opacity_logits=np.zeros(n),
            sh_coeffs=np.zeros((n, 3, NUM_SH_COEFFS)),
        )

    def groups(self) -> dict[str, np.ndarray]:
        """Split into the optimizer's parameter groups."""
        return {
            "position": self.positions,
            "log_scale": self.log_scales,
            "rotation": self.rotations,
            "opacity": self.opacity_logits,
            "sh_dc": self.sh_coeffs[:, :, 0],
            "sh_rest": self.sh_coeffs[:, :, 1:],
        }


def _quat_rotation_jacobian(q_unit: np.ndarray) -> np.ndarray:
    """dR/d(unit quaternion), shape (M, 4, 3, 3), components (w, x, y, z)."""
    w, x, y, z = q_unit[:, 0], q_unit[:, 1], q_unit[:, 2], q_unit[:, 3]
    zero = np.zeros_like(w)
    jac = np.empty((q_unit.shape[0], 4, 3, 3), dtype=np.float64)
    jac[:, 0] = 2.0 * np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    jac[:, 1] = 2.0 * np.stack(
        [
            np.stack([zero, y, z], axis=-1),
            np.stack([y, -2 * x, -w], axis=-1),
            np.stack([z, w, -2 * x], axis=-1),
        ],
        axis=-2,
    )
    jac[:, 2] = 2.0 * np.stack(
        [
            np.stack([-2 * y, x, w], axis=-1),
            np.stack([x, zero, z], axis=-1),
            np.stack([-w, z, -2 * y], axis=-1),
        ],
        axis=-2,
    )
    jac[:, 3] = 2.0 * np.stack(
        [
            np.stack([-2 * z, -w, x], axis=-1),
            np.stack([w, -2 * z, y], axis=-1),
            np.stack([x, y, zero], axis=-1),
        ],
        axis=-2,
    )
    return jac


def backward(
    cloud: SplatCloud,
    camera: Camera,
    target,
    lambda_dssim: float = 0.2,
    background=(0.0, 0.0, 0.0),
    tile_size: int = TILE_SIZE,
    stats: RenderStats | None = None,
) -> tuple[float, CloudGradients, RenderStats, ImageBuffer]:
    """Render, evaluate the loss against `target`, and backpropagate.

    Returns (loss value, parameter gradients, per-render stats, rendered
    image). The stats carry this render's visibility/radius plus the
    screen-space positional gradient magnitude (scaled to normalized device
    units: pixel gradients times width/2 and height/2) and the world-space
    positional gradient, both used by densification.
    """
    intr = camera.intrinsics
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    grads = CloudGradients.zeros(len(cloud))
    if stats is None:
        stats = RenderStats.zeros(len(cloud))

    proj = project_cloud(cloud, camera)
    order = depth_sort(proj.depth)
    mean2d = proj.mean2d[order]
    conic = proj.conic[order]
    rgb = proj.rgb[order]
    alpha = proj.alpha[order]
    bbox = proj.bbox[order]
    source_row = proj.indices[order]
    m = len(order)

    nx, ny, tile_lists, valid = bin_splats_to_tiles(bbox, intr.width, intr.height, tile_size)
    stats.visible[source_row[valid]] = True
    stats.max_radius[source_row[valid]] = proj.radius[order][valid]

    image = np.empty((intr.height, intr.width, 3), dtype=np.float64)

    # pass 1: forward image, tile by tile (memory stays per-tile)
    tile_pixels: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for tile_index, ids in enumerate(tile_lists):
        ty, tx = divmod(tile_index, nx)
        x0, y0 = tx * tile_size, ty * tile_size
        w = min(tile_size, intr.width - x0)
        h = min(tile_size, intr.height - y0)
        if not ids:
            image[y0 : y0 + h, x0 : x0 + w] = bg
            continue
        xs = x0 + 0.5 + np.arange(w, dtype=np.float64)
        ys = y0 + 0.5 + np.arange(h, dtype=np.float64)
        px = np.tile(xs, h)
        py = np.repeat(ys, w)
        tile_pixels[tile_index] = (px, py)
        k = np.asarray(ids, dtype=np.int64)
        colors = composite_pixels(px, py, mean2d[k], conic[k], rgb[k], alpha[k], bg)
        image[y0 : y0 + h, x0 : x0 + w] = colors.reshape(h, w, 3)

    value, dldc_img = loss_with_grad(image, target, lambda_dssim)

    if m == 0:
        return value, grads, stats, ImageBuffer(pixels=image)

    # accumulators over depth-ordered visible splats
    acc_rgb = np.zeros((m, 3))
    acc_alpha = np.zeros(m)
    acc_mean2d = np.zeros((m, 2))
    acc_conic_full = np.zeros((m, 2, 2))

    # pass 2: recompute each tile and accumulate per-splat sums
    for tile_index, ids in enumerate(tile_lists):
        if not ids:
            continue
        ty, tx = divmod(tile_index, nx)
        x0, y0 = tx * tile_size, ty * tile_size
        w = min(tile_size, intr.width - x0)
        h = min(tile_size, intr.height - y0)
        px, py = tile_pixels[tile_index]
        k = np.asarray(ids, dtype=np.int64)
        dx = px[None, :] - mean2d[k, 0][:, None]
        dy = py[None, :] - mean2d[k, 1][:, None]
        a00 = conic[k, 0, 0][:, None]
        a01 = conic[k, 0, 1][:, None]
        a11 = conic[k, 1, 1][:, None]
        mdist = a00 * dx * dx + 2.0 * a01 * dx * dy + a11 * dy * dy
        exp_term = np.exp(-0.5 * mdist)
        g_raw = alpha[k][:, None] * exp_term
        g = np.where(g_raw < ALPHA_SKIP, 0.0, np.minimum(g_raw, ALPHA_CLAMP))
        one_minus = 1.0 - g
        t_cum = np.cumprod(one_minus, axis=0)
        t_before = np.empty_like(t_cum)
        t_before[0] = 1.0
        t_before[1:] = t_cum[:-1]
        alive = t_before >= T_TERMINATE
        weights = np.where(alive, t_before * g, 0.0)
        t_final = np.where(alive, one_minus, 1.0).prod(axis=0)

        dldc = dldc_img[y0 : y0 + h, x0 : x0 + w].reshape(-1, 3)  # (P, 3)

        # dL/drgb_k = sum_p w_kp * dL/dC_p
        acc_rgb[k] += weights @ dldc

        # suffix color sums: R_i = sum_{j>i} w_j c_j + T_fin*bg = C - prefix_i
        wc = weights[:, :, None] * rgb[k][:, None, :]  # (K, P, 3)
        prefix = np.cumsum(wc, axis=0)
        total = prefix[-1] + t_final[:, None] * bg[None, :]
        suffix = total[None, :, :] - prefix  # (K, P, 3)

        # dL/dg_i = sum_c dldc_c * (T_i c_i - R_i / (1 - g_i))
        direct = t_before[:, :, None] * rgb[k][:, None, :]
        grad_g = np.einsum("kpc,pc->kp", direct - suffix / one_minus[:, :, None], dldc)
        live = alive & (g_raw >= ALPHA_SKIP) & (g_raw <= ALPHA_CLAMP)
        grad_graw = np.where(live, grad_g, 0.0)

        acc_alpha[k] += (grad_graw * exp_term).sum(axis=1)
        grad_mdist = grad_graw * (alpha[k][:, None] * exp_term) * (-0.5)  # (K, P)

        gx = grad_mdist * (2.0 * (a00 * dx + a01 * dy))
        gy = grad_mdist * (2.0 * (a01 * dx + a11 * dy))
        acc_mean2d[k, 0] += -gx.sum(axis=1)
        acc_mean2d[k, 1] += -gy.sum(axis=1)

        acc_conic_full[k, 0, 0] += (grad_mdist * dx * dx).sum(axis=1)
        acc_conic_full[k, 0, 1] += (grad_mdist * dx * dy).sum(axis=1)
        acc_conic_full[k, 1, 0] += (grad_mdist * dy * dx).sum(axis=1)
        acc_conic_full[k, 1, 1] += (grad_mdist * dy * dy).sum(axis=1)

    # ---- chain screen-space gradients back to splat parameters (vectorized) ----
    rows = source_row  # original cloud rows, depth order
    p_cam = proj.p_cam[order]
    fx, fy = intr.fx, intr.fy

    # conic = inverse(cov2d): dL/dcov2d = -conic^T dL/dconic conic^T
    grad_cov2d = -np.einsum("mij,mjk,mkl->mil", conic, acc_conic_full, conic)

    jac = perspective_jacobians(p_cam, fx, fy)  # (M, 2, 3)
    mw = jac @ camera.rotation  # (M, 2, 3)
    sigma3 = cloud.covariances()[rows]

    grad_sigma3 = np.einsum("mji,mjk,mkl->mil", mw, grad_cov2d, mw)
    sym = grad_cov2d + np.swapaxes(grad_cov2d, 1, 2)
    grad_mw = np.einsum("mij,mjk,mkl->mil", sym, mw, sigma3)
    grad_jac = np.einsum("mij,kj->mik", grad_mw, camera.rotation)

    # mean2d depends on p_cam through the projection (rows of jac)
    grad_p_cam = np.einsum("mji,mj->mi", jac, acc_mean2d)
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    inv_z2 = 1.0 / (z * z)
    inv_z3 = inv_z2 / z
    grad_p_cam[:, 0] += grad_jac[:, 0, 2] * (-fx * inv_z2)
    grad_p_cam[:, 1] += grad_jac[:, 1, 2] * (-fy * inv_z2)
    grad_p_cam[:, 2] += (
        grad_jac[:, 0, 0] * (-fx * inv_z2)
        + grad_jac[:, 0, 2] * (2.0 * fx * x * inv_z3)
        + grad_jac[:, 1, 1] * (-fy * inv_z2)
        + grad_jac[:, 1, 2] * (2.0 * fy * y * inv_z3)
    )
    grad_pos = grad_p_cam @ camera.rotation  # R^T row-wise

    # sigma3 = R diag(exp(2 ls)) R^T
    q = cloud.rotations[rows]
    q_norm = np.linalg.norm(q, axis=1, keepdims=True)
    q_unit = q / q_norm
    rot = quat_to_rotmat(q)
    diag_e2ls = np.exp(2.0 * cloud.log_scales[rows])

    grad_diag = np.einsum("mji,mjk,mkl->mil", rot, grad_sigma3, rot)
    grad_ls = np.einsum("mkk->mk", grad_diag) * 2.0 * diag_e2ls

    sym3 = grad_sigma3 + np.swapaxes(grad_sigma3, 1, 2)
    grad_rot = np.einsum("mij,mjk,mk->mik", sym3, rot, diag_e2ls)
    quat_jac = _quat_rotation_jacobian(q_unit)  # (M, 4, 3, 3)
    grad_q_unit = np.einsum("maij,mij->ma", quat_jac, grad_rot)
    # through normalization q_unit = q / |q|
    grad_q = (grad_q_unit - q_unit * np.einsum("ma,ma->m", grad_q_unit, q_unit)[:, None]) / q_norm

    # opacity: alpha = sigmoid(logit)
    grad_logit = acc_alpha * alpha * (1.0 - alpha)

    # color: rgb = max(raw, 0), raw = basis . coeffs + 0.5, dir from camera center
    active_k = num_sh_coeffs(cloud.active_sh_degree)
    pass_clamp = (proj.rgb_raw[order] > 0.0).astype(np.float64)  # (M, 3)
    grad_rgb_eff = acc_rgb * pass_clamp
    norm_p = np.linalg.norm(p_cam, axis=1, keepdims=True)
    view_dir = (p_cam / norm_p) @ camera.rotation
    basis = sh_basis(view_dir, cloud.active_sh_degree)  # (M, K)
    grad_sh_active = grad_rgb_eff[:, :, None] * basis[:, None, :]  # (M, 3, K)

    coeffs = cloud.sh_coeffs[rows][:, :, :active_k]
    basis_jac = sh_basis_grad(view_dir, cloud.active_sh_degree)  # (M, K, 3)
    grad_dir = np.einsum("mc,mck,mkd->md", grad_rgb_eff, coeffs, basis_jac)
    # dir = u / |u| with u = p_world - center
    grad_u = (grad_dir - view_dir * np.einsum("md,md->m", grad_dir, view_dir)[:, None]) / norm_p
    grad_pos += grad_u

    # scatter back to original cloud rows
    grads.positions[rows] += grad_pos
    grads.log_scales[rows] += grad_ls
    grads.rotations[rows] += grad_q
    grads.opacity_logits[rows] += grad_logit
    grads.sh_coeffs[rows, :, :active_k] += grad_sh_active

    # densification stats: screen gradient in NDC units, world-space direction
    ndc = acc_mean2d * np.array([intr.width / 2.0, intr.height / 2.0])
    stats.grad2d_norm[rows] += np.linalg.norm(ndc, axis=1)
    stats.grad_pos_world[rows] += grad_pos

    return value, grads, stats, ImageBuffer(pixels=image)
