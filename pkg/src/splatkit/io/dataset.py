"""Assemble a training dataset from a sparse model and its source images."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os
from pathlib import Path

import numpy as np
from PIL import Image

from ..camera import Camera
from ..errors import DatasetError
from ..image import ImageBuffer
from .colmap import SparseModel


@dataclass
class TrainingView:
    """A posed ground-truth image."""

    name: str
    camera: Camera
    image: ImageBuffer


@dataclass
class TrainingDataset:
    """Posed images plus the sparse points used to seed optimization."""

    views: list[TrainingView]
    seed_xyz: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    seed_rgb: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint8))

    def __post_init__(self):
        self.seed_xyz = np.asarray(self.seed_xyz, dtype=np.float64).reshape(-1, 3)
        self.seed_rgb = np.asarray(self.seed_rgb, dtype=np.uint8).reshape(-1, 3)
        for view in self.views:
            intr = view.camera.intrinsics
            if view.image.height != intr.height or view.image.width != intr.width:
                raise DatasetError(
                    f"image {view.name!r} is {view.image.width}x{view.image.height} but its "
                    f"camera expects {intr.width}x{intr.height}"
                )

    def camera_centers(self) -> np.ndarray:
        if not self.views:
            return np.zeros((0, 3))
        return np.stack([v.camera.center for v in self.views])


def _load_view(sparse: SparseModel, image_dir: Path, index: int, downscale: float, near_plane: float) -> TrainingView:
    record = sparse.images[index]
    path = image_dir / record.name
    if not path.is_file():
        raise DatasetError(f"image file missing for {record.name!r} (looked at {path})")
    intr = sparse.cameras[record.camera_id]
    if downscale != 1.0:
        intr = intr.scaled(1.0 / downscale, 1.0 / downscale)
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            if rgb.size != (intr.width, intr.height):
                native = sparse.cameras[record.camera_id]
                if rgb.size != (native.width, native.height):
                    raise DatasetError(
                        f"image {record.name!r} is {rgb.size[0]}x{rgb.size[1]} but its camera "
                        f"expects {native.width}x{native.height}"
                    )
                rgb = rgb.resize((intr.width, intr.height), Image.Resampling.BILINEAR)
            pixels = np.asarray(rgb)
    except DatasetError:
        raise
    except Exception as exc:
        raise DatasetError(f"cannot decode image {record.name!r}: {exc}") from exc
    return TrainingView(
        name=record.name,
        camera=record.camera(intr, near_plane=near_plane),
        image=ImageBuffer.from_uint8(pixels),
    )


def assemble_dataset(
    sparse: SparseModel,
    image_dir: str | Path,
    downscale: float = 1.0,
    near_plane: float = 0.01,
    max_workers: int = 8,
) -> TrainingDataset:
    """Decode every posed image and pair it with its camera.

    Pixels come out as float RGB in [0, 1] (8-bit values / 255, no gamma
    change). `downscale` divides both the pixel grid and the intrinsics.
    Any missing or undecodable image aborts the whole assembly.
    """
    if downscale < 1.0:
        raise DatasetError(f"downscale factor must be >= 1, got {downscale}")
    image_dir = Path(image_dir)
    indices = range(len(sparse.images))
    if len(sparse.images) > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, len(sparse.images))) as pool:
            views = list(pool.map(lambda i: _load_view(sparse, image_dir, i, downscale, near_plane), indices))
    else:
        views = [_load_view(sparse, image_dir, i, downscale, near_plane) for i in indices]
    return TrainingDataset(views=views, seed_xyz=sparse.points_xyz.copy(), seed_rgb=sparse.points_rgb.copy())


IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}


def _candidate_dirs(root: Path):
    yield root
    for dirpath, dirnames, _ in os.walk(root):
        dirnames[:] = [d for d in dirnames if not d.startswith((".", "__"))]
        for d in dirnames:
            yield Path(dirpath) / d


def find_images_dir(root: str | Path, sparse: SparseModel | None = None) -> Path:
    """Find the directory under `root` holding the capture's image files.

    With a sparse model, the directory must contain every image name the
    model references; otherwise the directory with the most image files wins.
    """
    root = Path(root)
    if sparse is not None and sparse.images:
        wanted = [img.name for img in sparse.images]
        for candidate in _candidate_dirs(root):
            if all((candidate / name).is_file() for name in wanted):
                return candidate
        raise DatasetError(f"no directory under {root} contains the {len(wanted)} posed images")
    best: Path | None = None
    best_count = 0
    for candidate in _candidate_dirs(root):
        count = sum(
            1
            for p in candidate.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if count > best_count:
            best, best_count = candidate, count
    if best is None:
        raise DatasetError(f"no images found under {root}")
    return best
