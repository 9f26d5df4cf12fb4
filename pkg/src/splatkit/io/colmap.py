"""COLMAP sparse-model reader (text and binary variants).

Reads cameras/images/points3D from a reconstruction directory or a
zip/tar archive. The text and binary forms of the same model parse to
identical values.
"""

from __future__ import annotations

import struct
import tarfile
import tempfile
import warnings
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..camera import Camera, CameraIntrinsics, quat_to_rotmat
from ..errors import (
    ColmapParseError,
    DanglingReferenceError,
    InvalidParameterError,
    UnsupportedCameraModelError,
)

# camera model id -> (name, parameter count); params are in COLMAP's order
CAMERA_MODELS = {
    0: ("SIMPLE_PINHOLE", 3),  # f, cx, cy
    1: ("PINHOLE", 4),  # fx, fy, cx, cy
    2: ("SIMPLE_RADIAL", 4),  # f, cx, cy, k
    3: ("RADIAL", 5),  # f, cx, cy, k1, k2
}
_MODEL_IDS = {name: mid for mid, (name, _) in CAMERA_MODELS.items()}
_DISTORTED = {"SIMPLE_RADIAL", "RADIAL"}


@dataclass
class ColmapImage:
    """A registered image: name, pose (world-to-camera), and camera reference."""

    name: str
    camera_id: int
    qvec: np.ndarray  # (w, x, y, z)
    tvec: np.ndarray

    def __post_init__(self):
        self.qvec = np.asarray(self.qvec, dtype=np.float64).reshape(4)
        self.tvec = np.asarray(self.tvec, dtype=np.float64).reshape(3)

    def camera(self, intrinsics: CameraIntrinsics, near_plane: float = 0.01) -> Camera:
        return Camera(
            intrinsics=intrinsics,
            rotation=quat_to_rotmat(self.qvec),
            translation=self.tvec,
            near_plane=near_plane,
        )


@dataclass
class SparseModel:
    """SfM output: intrinsics per camera id, posed images, and a sparse point cloud."""

    cameras: dict[int, CameraIntrinsics]
    images: list[ColmapImage]
    points_xyz: np.ndarray  # (P, 3) float64
    points_rgb: np.ndarray  # (P, 3) uint8
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.points_xyz = np.asarray(self.points_xyz, dtype=np.float64).reshape(-1, 3)
        self.points_rgb = np.asarray(self.points_rgb, dtype=np.uint8).reshape(-1, 3)
        for image in self.images:
            if image.camera_id not in self.cameras:
                raise DanglingReferenceError(
                    f"image {image.name!r} references missing camera id {image.camera_id}"
                )
            norm = float(np.linalg.norm(image.qvec))
            if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
                raise ColmapParseError(
                    f"image {image.name!r} pose quaternion is not unit length (|q|={norm!r})"
                )

    def view_cameras(self, near_plane: float = 0.01) -> list[Camera]:
        return [img.camera(self.cameras[img.camera_id], near_plane) for img in self.images]


def _intrinsics_from_model(model_name: str, width: int, height: int, params: list[float], origin: str):
    if model_name in ("SIMPLE_PINHOLE", "SIMPLE_RADIAL", "RADIAL"):
        f, cx, cy = params[0], params[1], params[2]
        fx = fy = f
    elif model_name == "PINHOLE":
        fx, fy, cx, cy = params[0], params[1], params[2], params[3]
    else:
        raise UnsupportedCameraModelError(f"unsupported camera model {model_name!r} in {origin}")
    try:
        return CameraIntrinsics(width=width, height=height, fx=fx, fy=fy, cx=cx, cy=cy)
    except InvalidParameterError as exc:
        raise ColmapParseError(f"invalid camera in {origin}: {exc}") from exc


def _noncomment_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _parse_cameras_text(text: str, warn: list[str]) -> dict[int, CameraIntrinsics]:
    cameras: dict[int, CameraIntrinsics] = {}
    for lineno, line in _noncomment_lines(text):
        tokens = line.split()
        if len(tokens) < 4:
            raise ColmapParseError(f"cameras.txt line {lineno}: expected CAM_ID MODEL W H PARAMS...")
        try:
            cam_id = int(tokens[0])
            width = int(tokens[2])
            height = int(tokens[3])
            params = [float(t) for t in tokens[4:]]
        except ValueError as exc:
            raise ColmapParseError(f"cameras.txt line {lineno}: {exc}") from None
        model_name = tokens[1]
        if model_name not in _MODEL_IDS:
            raise UnsupportedCameraModelError(
                f"unsupported camera model {model_name!r} (cameras.txt line {lineno})"
            )
        expected = CAMERA_MODELS[_MODEL_IDS[model_name]][1]
        if len(params) != expected:
            raise ColmapParseError(
                f"cameras.txt line {lineno}: model {model_name} takes {expected} params, got {len(params)}"
            )
        if model_name in _DISTORTED:
            warn.append(f"camera {cam_id}: ignoring {model_name} distortion parameters")
        cameras[cam_id] = _intrinsics_from_model(
            model_name, width, height, params, f"cameras.txt line {lineno}"
        )
    return cameras


def _parse_images_text(text: str) -> list[ColmapImage]:
    images: list[ColmapImage] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 10:
            raise ColmapParseError(
                f"images.txt: expected IMG_ID QW QX QY QZ TX TY TZ CAM_ID NAME, got {line!r}"
            )
        try:
            qvec = np.array([float(t) for t in tokens[1:5]])
            tvec = np.array([float(t) for t in tokens[5:8]])
            camera_id = int(tokens[8])
        except ValueError as exc:
            raise ColmapParseError(f"images.txt: {exc}") from None
        name = " ".join(tokens[9:])
        images.append(ColmapImage(name=name, camera_id=camera_id, qvec=qvec, tvec=tvec))
        # the following line holds this image's 2D observations; unused here
        i += 1
    return images


def _parse_points_text(text: str):
    xyz: list[list[float]] = []
    rgb: list[list[int]] = []
    for lineno, line in _noncomment_lines(text):
        tokens = line.split()
        if len(tokens) < 8:
            raise ColmapParseError(
                f"points3D.txt line {lineno}: expected PT_ID X Y Z R G B ERROR TRACK..."
            )
        try:
            xyz.append([float(tokens[1]), float(tokens[2]), float(tokens[3])])
            color = [int(tokens[4]), int(tokens[5]), int(tokens[6])]
        except ValueError as exc:
            raise ColmapParseError(f"points3D.txt line {lineno}: {exc}") from None
        if any(c < 0 or c > 255 for c in color):
            raise ColmapParseError(f"points3D.txt line {lineno}: rgb out of [0, 255]")
        rgb.append(color)
    if not xyz:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8)
    return np.array(xyz, dtype=np.float64), np.array(rgb, dtype=np.uint8)


class _Cursor:
    """Bounds-checked little-endian struct reader over a byte buffer."""

    def __init__(self, data: bytes, origin: str):
        self.data = data
        self.origin = origin
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        if self.pos + size > len(self.data):
            raise ColmapParseError(f"{self.origin}: unexpected end of file at byte {self.pos}")
        out = struct.unpack_from("<" + fmt, self.data, self.pos)
        self.pos += size
        return out

    def cstring(self, max_len: int = 4096) -> str:
        end = self.data.find(b"\x00", self.pos, self.pos + max_len)
        if end < 0:
            raise ColmapParseError(f"{self.origin}: unterminated string at byte {self.pos}")
        raw = self.data[self.pos : end]
        self.pos = end + 1
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ColmapParseError(f"{self.origin}: undecodable image name at byte {self.pos}") from None

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def check_count(self, count: int, min_record: int, what: str) -> None:
        if count < 0 or count * min_record > self.remaining():
            raise ColmapParseError(f"{self.origin}: implausible {what} count {count}")


def _parse_cameras_binary(data: bytes, warn: list[str]) -> dict[int, CameraIntrinsics]:
    cur = _Cursor(data, "cameras.bin")
    (count,) = cur.unpack("Q")
    cur.check_count(count, struct.calcsize("<iiQQ"), "camera")
    cameras: dict[int, CameraIntrinsics] = {}
    for _ in range(count):
        cam_id, model_id, width, height = cur.unpack("iiQQ")
        if model_id not in CAMERA_MODELS:
            raise UnsupportedCameraModelError(f"unsupported camera model id {model_id} in cameras.bin")
        model_name, num_params = CAMERA_MODELS[model_id]
        params = list(cur.unpack("d" * num_params))
        if model_name in _DISTORTED:
            warn.append(f"camera {cam_id}: ignoring {model_name} distortion parameters")
        cameras[cam_id] = _intrinsics_from_model(model_name, width, height, params, "cameras.bin")
    return cameras


def _parse_images_binary(data: bytes) -> list[ColmapImage]:
    cur = _Cursor(data, "images.bin")
    (count,) = cur.unpack("Q")
    cur.check_count(count, struct.calcsize("<idddddddi") + 1 + 8, "image")
    images: list[ColmapImage] = []
    for _ in range(count):
        props = cur.unpack("idddddddi")
        qvec = np.array(props[1:5])
        tvec = np.array(props[5:8])
        camera_id = props[8]
        name = cur.cstring()
        (num_points2d,) = cur.unpack("Q")
        cur.check_count(num_points2d, struct.calcsize("<ddq"), "observation")
        cur.pos += struct.calcsize("<ddq") * num_points2d
        images.append(ColmapImage(name=name, camera_id=camera_id, qvec=qvec, tvec=tvec))
    return images


def _parse_points_binary(data: bytes):
    cur = _Cursor(data, "points3D.bin")
    (count,) = cur.unpack("Q")
    record = struct.calcsize("<QdddBBBd") + 8
    cur.check_count(count, record, "point")
    xyz = np.empty((count, 3), dtype=np.float64)
    rgb = np.empty((count, 3), dtype=np.uint8)
    for i in range(count):
        fields = cur.unpack("QdddBBBd")
        xyz[i] = fields[1:4]
        rgb[i] = fields[4:7]
        (track_len,) = cur.unpack("Q")
        cur.check_count(track_len, struct.calcsize("<ii"), "track element")
        cur.pos += struct.calcsize("<ii") * track_len
    return xyz, rgb


def _read_text(path: Path) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ColmapParseError(f"{path.name} is not valid UTF-8 text: {exc}") from exc


def _find_model_dir(root: Path) -> Path:
    """Locate the directory actually holding cameras.{txt,bin}."""
    candidates = [root, root / "sparse" / "0", root / "sparse", root / "0"]
    for cand in candidates:
        if (cand / "cameras.bin").is_file() or (cand / "cameras.txt").is_file():
            return cand
    # tolerate a single wrapping directory (common in archives)
    subdirs = [p for p in root.iterdir() if p.is_dir()] if root.is_dir() else []
    if len(subdirs) == 1:
        return _find_model_dir(subdirs[0])
    raise ColmapParseError(f"no cameras.txt or cameras.bin found under {root}")


def _extract_archive(path: Path, dest: Path) -> None:
    def safe_target(name: str) -> Path | None:
        parts = Path(name).parts
        if not parts or any(p in ("..", "") for p in parts) or Path(name).is_absolute():
            return None
        return dest.joinpath(*parts)

    if zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as zf:
            for info in zf.infolist():
                target = safe_target(info.filename)
                if target is None or info.is_dir():
                    continue
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(zf.read(info))
        return
    if tarfile.is_tarfile(path):
        with tarfile.open(path) as tf:
            for member in tf.getmembers():
                if not member.isfile():
                    continue
                target = safe_target(member.name)
                if target is None:
                    continue
                target.parent.mkdir(parents=True, exist_ok=True)
                src = tf.extractfile(member)
                if src is not None:
                    target.write_bytes(src.read())
        return
    raise ColmapParseError(f"{path} is neither a directory nor a zip/tar archive")


def read_colmap_sparse(path: str | Path) -> SparseModel:
    """Read a COLMAP sparse model from a directory or a zip/tar archive.

    Binary files are preferred when both variants are present. Radial camera
    models are accepted with their distortion ignored; the dropped parameters
    are reported through `SparseModel.warnings` and a `UserWarning`.
    """
    path = Path(path)
    if path.is_file():
        with tempfile.TemporaryDirectory(prefix="splatkit-sparse-") as tmp:
            _extract_archive(path, Path(tmp))
            return read_colmap_sparse(tmp)
    if not path.is_dir():
        raise ColmapParseError(f"{path} does not exist")
    model_dir = _find_model_dir(path)

    warn: list[str] = []
    if (model_dir / "cameras.bin").is_file():
        cameras = _parse_cameras_binary((model_dir / "cameras.bin").read_bytes(), warn)
    else:
        cameras = _parse_cameras_text(_read_text(model_dir / "cameras.txt"), warn)

    if (model_dir / "images.bin").is_file():
        images = _parse_images_binary((model_dir / "images.bin").read_bytes())
    elif (model_dir / "images.txt").is_file():
        images = _parse_images_text(_read_text(model_dir / "images.txt"))
    else:
        raise ColmapParseError(f"no images.txt or images.bin in {model_dir}")

    if (model_dir / "points3D.bin").is_file():
        xyz, rgb = _parse_points_binary((model_dir / "points3D.bin").read_bytes())
    elif (model_dir / "points3D.txt").is_file():
        xyz, rgb = _parse_points_text(_read_text(model_dir / "points3D.txt"))
    else:
        raise ColmapParseError(f"no points3D.txt or points3D.bin in {model_dir}")

    for message in warn:
        warnings.warn(message, UserWarning, stacklevel=2)
    return SparseModel(cameras=cameras, images=images, points_xyz=xyz, points_rgb=rgb, warnings=warn)
