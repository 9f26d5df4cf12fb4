"""Pinhole cameras: intrinsics, world-to-camera poses, and orbit paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError(
                f"image dimensions must be >= 1, got {self.width}x{self.height}"
            )
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameterError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    def scaled(self, sx: float, sy: float) -> "CameraIntrinsics":
        """Intrinsics after resizing the image by (sx, sy)."""
        return CameraIntrinsics(
            width=max(1, int(round(self.width * sx))),
            height=max(1, int(round(self.height * sy))),
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx,
            cy=self.cy * sy,
        )


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion; normalizes first.

    Supports a single quaternion (4,) or a batch (N, 4).
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    norm = np.linalg.norm(q, axis=1)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise InvalidParameterError("quaternion must be finite and nonzero")
    q = q / norm[:, None]
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    r[:, 0, 0] = 1 - 2 * (y * y + z * z)
    r[:, 0, 1] = 2 * (x * y - w * z)
    r[:, 0, 2] = 2 * (x * z + w * y)
    r[:, 1, 0] = 2 * (x * y + w * z)
    r[:, 1, 1] = 1 - 2 * (x * x + z * z)
    r[:, 1, 2] = 2 * (y * z - w * x)
    r[:, 2, 0] = 2 * (x * z - w * y)
    r[:, 2, 1] = 2 * (y * z + w * x)
    r[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return r[0] if single else r


def rotmat_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit (w, x, y, z) quaternion of an orthonormal rotation matrix."""
    r = np.asarray(r, dtype=np.float64)
    k = np.array(
        [
            [r[0, 0] - r[1, 1] - r[2, 2], 0, 0, 0],
            [r[1, 0] + r[0, 1], r[1, 1] - r[0, 0] - r[2, 2], 0, 0],
            [r[2, 0] + r[0, 2], r[2, 1] + r[1, 2], r[2, 2] - r[0, 0] - r[1, 1], 0],
            [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1], r[0, 0] + r[1, 1] + r[2, 2]],
        ]
    ) / 3.0
    eigvals, eigvecs = np.linalg.eigh(k)
    q = eigvecs[[3, 0, 1, 2], np.argmax(eigvals)]
    if q[0] < 0:
        q = -q
    return q


@dataclass
class Camera:
    """World-to-camera pose plus intrinsics. x_cam = R @ x_world + t."""

    intrinsics: CameraIntrinsics
    rotation: np.ndarray
    translation: np.ndarray
    near_plane: float = 0.01

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.near_plane <= 0:
            raise InvalidParameterError(f"near_plane must be positive, got {self.near_plane}")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if not np.isfinite(err) or err > 1e-6:
            raise InvalidParameterError(f"rotation is not orthonormal (max deviation {err:.2e})")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation


def look_at_camera(
    position: np.ndarray,
    target: np.ndarray,
    intrinsics: CameraIntrinsics,
    up: np.ndarray | None = None,
    near_plane: float = 0.01,
) -> Camera:
    """Camera at `position` looking toward `target` (OpenCV axes: +z forward, +y down)."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.array([0.0, 1.0, 0.0]) if up is None else np.asarray(up, dtype=np.float64)

    forward = target - position
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise InvalidParameterError("camera position coincides with look-at target")
    forward = forward / norm
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-12:
        # up parallel to view direction; pick another world axis
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=0)
    return Camera(intrinsics=intrinsics, rotation=rotation, translation=-rotation @ position, near_plane=near_plane)


@dataclass
class OrbitPath:
    """Circular camera path around a target point."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 4.0
    height: float = 0.0
    frames: int = 1

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if self.frames < 1:
            raise InvalidParameterError(f"orbit needs frames >= 1, got {self.frames}")
        if self.radius <= 0:
            raise InvalidParameterError(f"orbit radius must be positive, got {self.radius}")

    def cameras(self, intrinsics: CameraIntrinsics, near_plane: float = 0.01) -> list[Camera]:
        cams = []
        for i in range(self.frames):
            angle = 2.0 * math.pi * i / self.frames
            position = self.center + np.array(
                [self.radius * math.cos(angle), self.height, self.radius * math.sin(angle)]
            )
            cams.append(look_at_camera(position, self.center, intrinsics, near_plane=near_plane))
        return cams
