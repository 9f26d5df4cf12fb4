"""Shared fixtures and independent test-side oracles.

The COLMAP writers here are deliberately NOT part of the package: they
serialize the formats from their published layout so that parser bugs in the
package cannot cancel out against a package-side writer.
"""

from __future__ import annotations

import struct
import zipfile
from pathlib import Path

import numpy as np
import pytest

from splatkit.camera import Camera, CameraIntrinsics, OrbitPath, look_at_camera, rotmat_to_quat
from splatkit.io.dataset import TrainingDataset, TrainingView
from splatkit.model import SplatCloud, logit
from splatkit.render import render

# ---------------------------------------------------------------------------
# random scene builders


def random_cloud(
    rng: np.random.Generator,
    count: int,
    degree: int = 3,
    position_range: float = 1.0,
    scale_range: tuple[float, float] = (0.02, 0.3),
    opacity_range: tuple[float, float] = (0.05, 0.95),
) -> SplatCloud:
    positions = rng.uniform(-position_range, position_range, size=(count, 3))
    log_scales = rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]), size=(count, 3))
    rotations = rng.normal(size=(count, 4))
    norms = np.linalg.norm(rotations, axis=1, keepdims=True)
    rotations = np.where(norms > 1e-9, rotations / norms, [[1.0, 0.0, 0.0, 0.0]])
    opacity_logits = logit(rng.uniform(*opacity_range, size=count)) if count else np.zeros(0)
    sh = np.zeros((count, 3, 16))
    coeffs = (degree + 1) ** 2
    sh[:, :, 0] = rng.uniform(-1.5, 1.5, size=(count, 3))
    if coeffs > 1:
        sh[:, :, 1:coeffs] = rng.uniform(-0.3, 0.3, size=(count, 3, coeffs - 1))
    return SplatCloud(positions, log_scales, rotations, opacity_logits, sh, degree)


def random_camera(
    rng: np.random.Generator,
    width: int,
    height: int,
    radius_range: tuple[float, float] = (2.5, 4.0),
) -> Camera:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    position = direction * rng.uniform(*radius_range)
    focal = rng.uniform(0.6, 1.4) * width
    intr = CameraIntrinsics(width, height, focal, focal, width / 2.0, height / 2.0)
    return look_at_camera(position, np.zeros(3), intr)


def empty_cloud() -> SplatCloud:
    return SplatCloud(
        np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3, 16)), 0
    )


# ---------------------------------------------------------------------------
# frozen synthetic-recovery fixture (20 ground-truth splats, 8-view orbit)

RECOVERY_EXTENT = 3.0


def recovery_ground_truth(seed: int = 11) -> SplatCloud:
    rng = np.random.default_rng(seed)
    n = 20
    positions = rng.uniform(-1.0, 1.0, size=(n, 3))
    log_scales = rng.uniform(np.log(0.05), np.log(0.14), size=(n, 3))
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    opacity_logits = logit(rng.uniform(0.45, 0.95, size=n))
    sh = np.zeros((n, 3, 16))
    sh[:, :, 0] = rng.uniform(-1.4, 1.4, size=(n, 3))
    return SplatCloud(positions, log_scales, rotations, opacity_logits, sh, active_sh_degree=0)


def recovery_cameras(width: int = 96, height: int = 72) -> list[Camera]:
    fx = 80.0 * width / 96.0
    intr = CameraIntrinsics(width, height, fx, fx, width / 2.0, height / 2.0)
    return OrbitPath(center=np.zeros(3), radius=3.0, height=0.8, frames=8).cameras(intr)


def recovery_dataset() -> tuple[SplatCloud, TrainingDataset]:
    gt = recovery_ground_truth()
    views = []
    for i, cam in enumerate(recovery_cameras()):
        image, _ = render(gt, cam)
        views.append(TrainingView(name=f"view{i:02d}.png", camera=cam, image=image))
    return gt, TrainingDataset(views=views)


def cli_train_ground_truth(seed: int = 22) -> SplatCloud:
    """12 fat, opaque splats that point seeding recovers past 30 dB in 2000 iters.

    Frozen after an oracle run: 50.10 dB final train-view PSNR with the
    recovery cameras, zero seed noise, grad_threshold 0.03, seed 7.
    """
    rng = np.random.default_rng(seed)
    n = 12
    positions = rng.uniform(-0.9, 0.9, size=(n, 3))
    log_scales = rng.uniform(np.log(0.30), np.log(0.50), size=(n, 3))
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    opacity_logits = logit(rng.uniform(0.60, 0.95, size=n))
    sh = np.zeros((n, 3, 16))
    sh[:, :, 0] = rng.uniform(-1.2, 1.2, size=(n, 3))
    return SplatCloud(positions, log_scales, rotations, opacity_logits, sh, 0)


def perturbed_copy(cloud: SplatCloud, sigma: float, seed: int = 7) -> SplatCloud:
    rng = np.random.default_rng(seed)
    out = cloud.copy()
    out.positions = out.positions + rng.normal(0.0, sigma, size=out.positions.shape)
    return out


# ---------------------------------------------------------------------------
# independent COLMAP writers (text and binary)

COLMAP_MODEL_IDS = {"SIMPLE_PINHOLE": 0, "PINHOLE": 1, "SIMPLE_RADIAL": 2, "RADIAL": 3}


def write_colmap_text(
    out_dir: Path,
    cameras: dict[int, tuple[str, int, int, list[float]]],
    images: list[tuple[int, np.ndarray, np.ndarray, int, str]],
    points: list[tuple[int, np.ndarray, tuple[int, int, int]]],
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cam_lines = ["# Camera list", "# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"]
    for cam_id, (model, width, height, params) in sorted(cameras.items()):
        param_text = " ".join(repr(float(p)) for p in params)
        cam_lines.append(f"{cam_id} {model} {width} {height} {param_text}")
    (out_dir / "cameras.txt").write_text("\n".join(cam_lines) + "\n")

    img_lines = ["# Image list: two lines per image"]
    for img_id, qvec, tvec, cam_id, name in images:
        pose = " ".join(repr(float(v)) for v in (*qvec, *tvec))
        img_lines.append(f"{img_id} {pose} {cam_id} {name}")
        img_lines.append("")  # observations line (empty track)
    (out_dir / "images.txt").write_text("\n".join(img_lines) + "\n")

    pt_lines = ["# 3D point list"]
    for pt_id, xyz, rgb in points:
        coords = " ".join(repr(float(v)) for v in xyz)
        pt_lines.append(f"{pt_id} {coords} {rgb[0]} {rgb[1]} {rgb[2]} 1.0")
    (out_dir / "points3D.txt").write_text("\n".join(pt_lines) + "\n")


def write_colmap_binary(
    out_dir: Path,
    cameras: dict[int, tuple[str, int, int, list[float]]],
    images: list[tuple[int, np.ndarray, np.ndarray, int, str]],
    points: list[tuple[int, np.ndarray, tuple[int, int, int]]],
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "cameras.bin", "wb") as fh:
        fh.write(struct.pack("<Q", len(cameras)))
        for cam_id, (model, width, height, params) in sorted(cameras.items()):
            fh.write(struct.pack("<iiQQ", cam_id, COLMAP_MODEL_IDS[model], width, height))
            fh.write(struct.pack(f"<{len(params)}d", *params))
    with open(out_dir / "images.bin", "wb") as fh:
        fh.write(struct.pack("<Q", len(images)))
        for img_id, qvec, tvec, cam_id, name in images:
            fh.write(struct.pack("<i", img_id))
            fh.write(struct.pack("<7d", *qvec, *tvec))
            fh.write(struct.pack("<i", cam_id))
            fh.write(name.encode("utf-8") + b"\x00")
            fh.write(struct.pack("<Q", 0))  # no observations
    with open(out_dir / "points3D.bin", "wb") as fh:
        fh.write(struct.pack("<Q", len(points)))
        for pt_id, xyz, rgb in points:
            fh.write(struct.pack("<Q", pt_id))
            fh.write(struct.pack("<3d", *xyz))
            fh.write(struct.pack("<3B", *rgb))
            fh.write(struct.pack("<d", 1.0))
            fh.write(struct.pack("<Q", 0))  # empty track


def random_colmap_model(rng: np.random.Generator, n_cameras=2, n_images=4, n_points=12):
    """Random but valid COLMAP model data for text/binary parity checks."""
    cameras = {}
    for i in range(n_cameras):
        cam_id = i + 1
        width = int(rng.integers(32, 200))
        height = int(rng.integers(32, 200))
        model = ("PINHOLE", "SIMPLE_PINHOLE")[int(rng.integers(0, 2))]
        if model == "PINHOLE":
            params = [
                float(rng.uniform(0.5, 2.0) * width),
                float(rng.uniform(0.5, 2.0) * width),
                width / 2.0,
                height / 2.0,
            ]
        else:
            params = [float(rng.uniform(0.5, 2.0) * width), width / 2.0, height / 2.0]
        cameras[cam_id] = (model, width, height, params)
    images = []
    for i in range(n_images):
        qvec = rng.normal(size=4)
        qvec /= np.linalg.norm(qvec)
        tvec = rng.uniform(-2, 2, size=3)
        cam_id = int(rng.integers(1, n_cameras + 1))
        images.append((i + 1, qvec, tvec, cam_id, f"img_{i:03d}.png"))
    points = [
        (i + 1, rng.uniform(-3, 3, size=3), tuple(int(v) for v in rng.integers(0, 256, size=3)))
        for i in range(n_points)
    ]
    return cameras, images, points


def camera_to_colmap_pose(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    return rotmat_to_quat(camera.rotation), camera.translation


# ---------------------------------------------------------------------------
# on-disk dataset + upload fixtures built from the recovery scene


def materialize_dataset_dir(
    out_dir: Path, gt: SplatCloud, cameras: list[Camera], seed_noise: float = 0.02
) -> Path:
    """Write a COLMAP-layout dataset dir: images/ + sparse/0/ text model."""
    out_dir.mkdir(parents=True, exist_ok=True)
    images_dir = out_dir / "images"
    images_dir.mkdir(exist_ok=True)
    intr = cameras[0].intrinsics
    colmap_cameras = {
        1: ("PINHOLE", intr.width, intr.height, [intr.fx, intr.fy, intr.cx, intr.cy])
    }
    colmap_images = []
    names = []
    for i, cam in enumerate(cameras):
        name = f"view{i:02d}.png"
        names.append(name)
        image, _ = render(gt, cam)
        image.save_png(images_dir / name)
        qvec, tvec = camera_to_colmap_pose(cam)
        colmap_images.append((i + 1, qvec, tvec, 1, name))
    rng = np.random.default_rng(0)
    seed_xyz = gt.positions + rng.normal(0, seed_noise, gt.positions.shape)
    seed_rgb = np.clip((gt.sh_coeffs[:, :, 0] * 0.28209479177387814 + 0.5) * 255, 0, 255)
    points = [
        (i + 1, seed_xyz[i], tuple(int(v) for v in seed_rgb[i])) for i in range(len(seed_xyz))
    ]
    write_colmap_text(out_dir / "sparse" / "0", colmap_cameras, colmap_images, points)
    return out_dir


def zip_dataset_dir(dataset_dir: Path, zip_path: Path, include_sparse: bool = True) -> Path:
    with zipfile.ZipFile(zip_path, "w") as zf:
        for path in sorted(dataset_dir.rglob("*")):
            if path.is_dir():
                continue
            rel = path.relative_to(dataset_dir)
            if not include_sparse and rel.parts[0] == "sparse":
                continue
            zf.write(path, str(rel))
    return zip_path


@pytest.fixture(scope="session")
def tiny_gt_cloud() -> SplatCloud:
    """Small, bright scene that trains in seconds at 64x48."""
    rng = np.random.default_rng(3)
    n = 6
    positions = rng.uniform(-0.8, 0.8, size=(n, 3))
    log_scales = rng.uniform(np.log(0.1), np.log(0.25), size=(n, 3))
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    sh = np.zeros((n, 3, 16))
    sh[:, :, 0] = rng.uniform(-1.2, 1.2, size=(n, 3))
    return SplatCloud(positions, log_scales, rotations, logit(np.full(n, 0.8)), sh, 0)


@pytest.fixture(scope="session")
def tiny_cameras() -> list[Camera]:
    intr = CameraIntrinsics(64, 48, 55.0, 55.0, 32.0, 24.0)
    return OrbitPath(radius=3.0, height=0.6, frames=9).cameras(intr)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory, tiny_gt_cloud, tiny_cameras) -> Path:
    out = tmp_path_factory.mktemp("tiny_dataset")
    return materialize_dataset_dir(out, tiny_gt_cloud, tiny_cameras)


@pytest.fixture(scope="session")
def tiny_capture_zip(tmp_path_factory, tiny_dataset_dir) -> Path:
    out = tmp_path_factory.mktemp("captures") / "capture.zip"
    return zip_dataset_dir(tiny_dataset_dir, out)


@pytest.fixture(scope="session")
def tiny_frames_zip(tmp_path_factory, tiny_dataset_dir) -> Path:
    out = tmp_path_factory.mktemp("captures_frames") / "frames.zip"
    return zip_dataset_dir(tiny_dataset_dir, out, include_sparse=False)


FAST_TRAIN_OVERRIDES = {
    "iterations": 12,
    "densify_interval": 10**6,
    "sh_promote_interval": 10**6,
    "checkpoint_interval": 6,
}
