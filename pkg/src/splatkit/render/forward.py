"""Tiled front-to-back compositing of projected splats."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..camera import Camera
from ..errors import InvalidParameterError
from ..image import ImageBuffer
from ..model import SplatCloud
from .projection import ALPHA_SKIP, ProjectionResult, depth_sort, project_cloud

TILE_SIZE = 16
ALPHA_CLAMP = 0.99
T_TERMINATE = 1e-4


@dataclass
class RenderStats:
    """Per-splat bookkeeping for densification (arrays run over the whole cloud).

    `grad2d_norm` and `grad_pos_world` stay zero until a backward pass fills
    them; `merge` folds one render/backward round into a running accumulator.
    """

    visible: np.ndarray  # (N,) bool, splat was rasterized
    max_radius: np.ndarray  # (N,) float, largest screen radius seen
    grad2d_norm: np.ndarray  # (N,) accumulated screen-space gradient magnitude (NDC-scaled)
    grad_pos_world: np.ndarray  # (N, 3) accumulated world-space position gradient
    seen: np.ndarray  # (N,) int, renders in which the splat was visible

    @classmethod
    def zeros(cls, n: int) -> "RenderStats":
        return cls(
            visible=np.zeros(n, dtype=bool),
            max_radius=np.zeros(n, dtype=np.float64),
            grad2d_norm=np.zeros(n, dtype=np.float64),
            grad_pos_world=np.zeros((n, 3), dtype=np.float64),
            seen=np.zeros(n, dtype=np.int64),
        )

    def __len__(self) -> int:
        return self.visible.shape[0]

    def merge(self, other: "RenderStats") -> None:
        """Accumulate one iteration's stats into this accumulator."""
        self.visible |= other.visible
        np.maximum(self.max_radius, other.max_radius, out=self.max_radius)
        self.grad2d_norm += other.grad2d_norm
        self.grad_pos_world += other.grad_pos_world
        self.seen += other.visible.astype(np.int64)


def pixel_overlap_ranges(bbox: np.ndarray, width: int, height: int):
    """Per-splat inclusive pixel index ranges whose centers fall in the bbox.

    Returns (j0, j1, i0, i1, valid); a splat is valid when at least one
    in-image pixel center lies inside its contribution bounds.
    """
    j0 = np.maximum(np.ceil(bbox[:, 0] - 0.5).astype(np.int64), 0)
    j1 = np.minimum(np.floor(bbox[:, 1] - 0.5).astype(np.int64), width - 1)
    i0 = np.maximum(np.ceil(bbox[:, 2] - 0.5).astype(np.int64), 0)
    i1 = np.minimum(np.floor(bbox[:, 3] - 0.5).astype(np.int64), height - 1)
    valid = (j0 <= j1) & (i0 <= i1)
    return j0, j1, i0, i1, valid


def bin_splats_to_tiles(bbox: np.ndarray, width: int, height: int, tile_size: int):
    """Assign depth-ordered splats to every tile their bounds overlap.

    Returns (nx, ny, tile_lists, valid) where tile_lists[ty * nx + tx] holds
    row numbers into the depth-ordered arrays, in compositing order.
    """
    nx = (width + tile_size - 1) // tile_size
    ny = (height + tile_size - 1) // tile_size
    j0, j1, i0, i1, valid = pixel_overlap_ranges(bbox, width, height)
    tx0, tx1 = j0 // tile_size, j1 // tile_size
    ty0, ty1 = i0 // tile_size, i1 // tile_size
    tile_lists: list[list[int]] = [[] for _ in range(nx * ny)]
    for k in np.nonzero(valid)[0]:
        for ty in range(ty0[k], ty1[k] + 1):
            row = ty * nx
            for tx in range(tx0[k], tx1[k] + 1):
                tile_lists[row + tx].append(int(k))
    return nx, ny, tile_lists, valid


def composite_pixels(
    px: np.ndarray,
    py: np.ndarray,
    mean2d: np.ndarray,
    conic: np.ndarray,
    rgb: np.ndarray,
    alpha: np.ndarray,
    background: np.ndarray,
):
    """Front-to-back compositing of depth-ordered splats over pixel centers.

    Per pixel: g = alpha * exp(-0.5 d^T conic d), zeroed under 1/255, clamped
    at 0.99; C += T * g * rgb with T *= (1 - g), stopping once T < 1e-4;
    finally C += T * background. Returns (P, 3) colors.
    """
    if mean2d.shape[0] == 0:
        return np.broadcast_to(background, (px.shape[0], 3)).copy()
    dx = px[None, :] - mean2d[:, 0][:, None]
    dy = py[None, :] - mean2d[:, 1][:, None]
    mdist = (
        conic[:, 0, 0][:, None] * dx * dx
        + 2.0 * conic[:, 0, 1][:, None] * dx * dy
        + conic[:, 1, 1][:, None] * dy * dy
    )
    g_raw = alpha[:, None] * np.exp(-0.5 * mdist)
    g = np.where(g_raw < ALPHA_SKIP, 0.0, np.minimum(g_raw, ALPHA_CLAMP))
    one_minus = 1.0 - g
    t_cum = np.cumprod(one_minus, axis=0)
    t_before = np.empty_like(t_cum)
    t_before[0] = 1.0
    t_before[1:] = t_cum[:-1]
    # T is nonincreasing, so this elementwise test equals the sequential
    # "terminate when T < 1e-4" break
    alive = t_before >= T_TERMINATE
    weights = np.where(alive, t_before * g, 0.0)
    colors = np.einsum("kp,kc->pc", weights, rgb)
    t_final = np.where(alive, one_minus, 1.0).prod(axis=0)
    colors += t_final[:, None] * background[None, :]
    return colors


def _prepare(cloud: SplatCloud, camera: Camera, background) -> tuple[ProjectionResult, np.ndarray, np.ndarray]:
    intr = camera.intrinsics
    if intr.width < 1 or intr.height < 1:
        raise InvalidParameterError(f"cannot render a {intr.width}x{intr.height} image")
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    proj = project_cloud(cloud, camera)
    return proj, bg, depth_sort(proj.depth)


def render(
    cloud: SplatCloud,
    camera: Camera,
    background=(0.0, 0.0, 0.0),
    tile_size: int = TILE_SIZE,
    workers: int = 1,
) -> tuple[ImageBuffer, RenderStats]:
    """Render a cloud through the tiled rasterizer.

    Splats are binned to 16x16-pixel tiles (size overridable for testing)
    and composited per tile in globally depth-sorted order. Output is
    deterministic for fixed inputs at any worker count; tiles have disjoint
    single-writer pixel regions.
    """
    if tile_size < 1:
        raise InvalidParameterError(f"tile_size must be >= 1, got {tile_size}")
    intr = camera.intrinsics
    proj, bg, order = _prepare(cloud, camera, background)
    stats = RenderStats.zeros(proj.total)
    image = np.empty((intr.height, intr.width, 3), dtype=np.float64)

    mean2d = proj.mean2d[order]
    conic = proj.conic[order]
    rgb = proj.rgb[order]
    alpha = proj.alpha[order]
    bbox = proj.bbox[order]
    source_row = proj.indices[order]

    nx, ny, tile_lists, valid = bin_splats_to_tiles(bbox, intr.width, intr.height, tile_size)
    binned = source_row[valid]
    stats.visible[binned] = True
    stats.max_radius[binned] = proj.radius[order][valid]

    def run_tile(tile_index: int) -> None:
        ty, tx = divmod(tile_index, nx)
        x0 = tx * tile_size
        y0 = ty * tile_size
        w = min(tile_size, intr.width - x0)
        h = min(tile_size, intr.height - y0)
        ids = tile_lists[tile_index]
        if not ids:
            image[y0 : y0 + h, x0 : x0 + w] = bg
            return
        xs = x0 + 0.5 + np.arange(w, dtype=np.float64)
        ys = y0 + 0.5 + np.arange(h, dtype=np.float64)
        px = np.tile(xs, h)
        py = np.repeat(ys, w)
        ids_arr = np.asarray(ids, dtype=np.int64)
        colors = composite_pixels(px, py, mean2d[ids_arr], conic[ids_arr], rgb[ids_arr], alpha[ids_arr], bg)
        image[y0 : y0 + h, x0 : x0 + w] = colors.reshape(h, w, 3)

    tiles = range(nx * ny)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_tile, tiles))
    else:
        for t in tiles:
            run_tile(t)
    return ImageBuffer(pixels=image), stats


def render_reference(cloud: SplatCloud, camera: Camera, background=(0.0, 0.0, 0.0)) -> ImageBuffer:
    """Brute-force renderer: every depth-sorted splat against every pixel.

    Same per-pixel compositing formula as `render` with no tile binning and
    no footprint culling beyond the per-pixel 1/255 skip. Intended for small
    clouds as a test oracle.
    """
    intr = camera.intrinsics
    if intr.width < 1 or intr.height < 1:
        raise InvalidParameterError(f"cannot render a {intr.width}x{intr.height} image")
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    proj = project_cloud(cloud, camera, cull_offscreen=False, cull_dim_alpha=False)
    order = depth_sort(proj.depth)
    xs = 0.5 + np.arange(intr.width, dtype=np.float64)
    ys = 0.5 + np.arange(intr.height, dtype=np.float64)
    px = np.tile(xs, intr.height)
    py = np.repeat(ys, intr.width)
    colors = composite_pixels(
        px, py, proj.mean2d[order], proj.conic[order], proj.rgb[order], proj.alpha[order], bg
    )
    return ImageBuffer(pixels=colors.reshape(intr.height, intr.width, 3))
