"""Gaussian splat scene model: parameters, activations, and view-dependent color."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import quat_to_rotmat
from .errors import InvalidParameterError

MAX_SH_DEGREE = 3
NUM_SH_COEFFS = (MAX_SH_DEGREE + 1) ** 2

# Real spherical harmonics constants, bands 0..3.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def num_sh_coeffs(degree: int) -> int:
    if not 0 <= degree <= MAX_SH_DEGREE:
        raise InvalidParameterError(f"SH degree must be in [0, {MAX_SH_DEGREE}], got {degree}")
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Basis values b_k(dir) for unit directions, shape (N, (degree+1)^2).

    A channel's color contribution is sum_k b_k * coeff_k.
    """
    k = num_sh_coeffs(degree)
    dirs = np.asarray(dirs, dtype=np.float64)
    single = dirs.ndim == 1
    dirs = np.atleast_2d(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    b = np.empty((dirs.shape[0], k), dtype=np.float64)
    b[:, 0] = SH_C0
    if degree >= 1:
        b[:, 1] = -SH_C1 * y
        b[:, 2] = SH_C1 * z
        b[:, 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        b[:, 4] = SH_C2[0] * x * y
        b[:, 5] = SH_C2[1] * y * z
        b[:, 6] = SH_C2[2] * (2 * zz - xx - yy)
        b[:, 7] = SH_C2[3] * x * z
        b[:, 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        b[:, 9] = SH_C3[0] * y * (3 * xx - yy)
        b[:, 10] = SH_C3[1] * x * y * z
        b[:, 11] = SH_C3[2] * y * (4 * zz - xx - yy)
        b[:, 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        b[:, 13] = SH_C3[4] * x * (4 * zz - xx - yy)
        b[:, 14] = SH_C3[5] * z * (xx - yy)
        b[:, 15] = SH_C3[6] * x * (xx - 3 * yy)
    return b[0] if single else b


def sh_basis_grad(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Jacobian d b_k / d dir for unit directions, shape (N, (degree+1)^2, 3)."""
    k = num_sh_coeffs(degree)
    dirs = np.asarray(dirs, dtype=np.float64)
    single = dirs.ndim == 1
    dirs = np.atleast_2d(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    g = np.zeros((dirs.shape[0], k, 3), dtype=np.float64)
    if degree >= 1:
        g[:, 1, 1] = -SH_C1
        g[:, 2, 2] = SH_C1
        g[:, 3, 0] = -SH_C1
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        g[:, 4, 0] = SH_C2[0] * y
        g[:, 4, 1] = SH_C2[0] * x
        g[:, 5, 1] = SH_C2[1] * z
        g[:, 5, 2] = SH_C2[1] * y
        g[:, 6, 0] = SH_C2[2] * (-2 * x)
        g[:, 6, 1] = SH_C2[2] * (-2 * y)
        g[:, 6, 2] = SH_C2[2] * (4 * z)
        g[:, 7, 0] = SH_C2[3] * z
        g[:, 7, 2] = SH_C2[3] * x
        g[:, 8, 0] = SH_C2[4] * (2 * x)
        g[:, 8, 1] = SH_C2[4] * (-2 * y)
    if degree >= 3:
        g[:, 9, 0] = SH_C3[0] * 6 * x * y
        g[:, 9, 1] = SH_C3[0] * (3 * xx - 3 * yy)
        g[:, 10, 0] = SH_C3[1] * y * z
        g[:, 10, 1] = SH_C3[1] * x * z
        g[:, 10, 2] = SH_C3[1] * x * y
        g[:, 11, 0] = SH_C3[2] * (-2 * x * y)
        g[:, 11, 1] = SH_C3[2] * (4 * zz - xx - 3 * yy)
        g[:, 11, 2] = SH_C3[2] * (8 * y * z)
        g[:, 12, 0] = SH_C3[3] * (-6 * x * z)
        g[:, 12, 1] = SH_C3[3] * (-6 * y * z)
        g[:, 12, 2] = SH_C3[3] * (6 * zz - 3 * xx - 3 * yy)
        g[:, 13, 0] = SH_C3[4] * (4 * zz - 3 * xx - yy)
        g[:, 13, 1] = SH_C3[4] * (-2 * x * y)
        g[:, 13, 2] = SH_C3[4] * (8 * x * z)
        g[:, 14, 0] = SH_C3[5] * (2 * x * z)
        g[:, 14, 1] = SH_C3[5] * (-2 * y * z)
        g[:, 14, 2] = SH_C3[5] * (xx - yy)
        g[:, 15, 0] = SH_C3[6] * (3 * xx - 3 * yy)
        g[:, 15, 1] = SH_C3[6] * (-6 * x * y)
    return g[0] if single else g


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    """Inverse sigmoid; accepts a scalar or an array, all values in (0, 1)."""
    arr = np.asarray(p, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise InvalidParameterError(f"logit argument must be in (0, 1), got {p}")
    out = np.log(arr / (1.0 - arr))
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def covariance3d(log_scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """3x3 world covariance R diag(exp(log_scale))^2 R^T of one Gaussian."""
    r = quat_to_rotmat(np.asarray(rotation, dtype=np.float64))
    s = np.exp(np.asarray(log_scale, dtype=np.float64).reshape(3))
    return (r * (s * s)) @ r.T


def activate_opacity(opacity_logit):
    """Opacity activation: sigmoid over the stored logit."""
    out = sigmoid(np.asarray(opacity_logit, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def eval_sh(sh_coeffs: np.ndarray, view_dir: np.ndarray, degree: int) -> np.ndarray:
    """Shade one splat: SH basis up to `degree` times (3, 16) coefficients.

    Adds the 0.5 offset convention and clamps below at zero.
    """
    coeffs = np.asarray(sh_coeffs, dtype=np.float64).reshape(3, NUM_SH_COEFFS)
    basis = sh_basis(np.asarray(view_dir, dtype=np.float64).reshape(3), degree)
    rgb = coeffs[:, : basis.shape[0]] @ basis + 0.5
    return np.maximum(rgb, 0.0)


@dataclass
class Splat:
    """A single Gaussian primitive (raw, pre-activation parameters)."""

    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    opacity_logit: float
    sh_coeffs: np.ndarray  # (3, 16), band-0 first

    def covariance(self) -> np.ndarray:
        r = quat_to_rotmat(self.rotation)
        s = np.exp(np.asarray(self.log_scale, dtype=np.float64))
        return (r * (s * s)) @ r.T

    @property
    def opacity(self) -> float:
        return float(sigmoid(np.asarray(self.opacity_logit)))


@dataclass
class SplatCloud:
    """Structure-of-arrays collection of Gaussian splats."""

    positions: np.ndarray  # (N, 3)
    log_scales: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4) as (w, x, y, z)
    opacity_logits: np.ndarray  # (N,)
    sh_coeffs: np.ndarray  # (N, 3, 16)
    active_sh_degree: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = self.positions.shape[0]
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.sh_coeffs = np.ascontiguousarray(self.sh_coeffs, dtype=np.float64).reshape(n, 3, NUM_SH_COEFFS)
        if not 0 <= self.active_sh_degree <= MAX_SH_DEGREE:
            raise InvalidParameterError(
                f"active SH degree must be in [0, {MAX_SH_DEGREE}], got {self.active_sh_degree}"
            )

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def empty(cls, active_sh_degree: int = 0) -> "SplatCloud":
        return cls(
            positions=np.zeros((0, 3)),
            log_scales=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            opacity_logits=np.zeros(0),
            sh_coeffs=np.zeros((0, 3, NUM_SH_COEFFS)),
            active_sh_degree=active_sh_degree,
        )

    @classmethod
    def from_splats(cls, splats: list[Splat], active_sh_degree: int = 0) -> "SplatCloud":
        if not splats:
            return cls.empty(active_sh_degree)
        return cls(
            positions=np.stack([s.position for s in splats]),
            log_scales=np.stack([s.log_scale for s in splats]),
            rotations=np.stack([s.rotation for s in splats]),
            opacity_logits=np.array([s.opacity_logit for s in splats]),
            sh_coeffs=np.stack([s.sh_coeffs for s in splats]),
            active_sh_degree=active_sh_degree,
        )

    def splat(self, i: int) -> Splat:
        return Splat(
            position=self.positions[i].copy(),
            log_scale=self.log_scales[i].copy(),
            rotation=self.rotations[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            sh_coeffs=self.sh_coeffs[i].copy(),
        )

    def copy(self) -> "SplatCloud":
        return SplatCloud(
            positions=self.positions.copy(),
            log_scales=self.log_scales.copy(),
            rotations=self.rotations.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh_coeffs=self.sh_coeffs.copy(),
            active_sh_degree=self.active_sh_degree,
        )

    def select(self, mask_or_index: np.ndarray) -> "SplatCloud":
        """New cloud keeping the given rows (boolean mask or index array)."""
        idx = np.asarray(mask_or_index)
        return SplatCloud(
            positions=self.positions[idx],
            log_scales=self.log_scales[idx],
            rotations=self.rotations[idx],
            opacity_logits=self.opacity_logits[idx],
            sh_coeffs=self.sh_coeffs[idx],
            active_sh_degree=self.active_sh_degree,
        )

    @staticmethod
    def concatenate(clouds: list["SplatCloud"]) -> "SplatCloud":
        if not clouds:
            return SplatCloud.empty()
        return SplatCloud(
            positions=np.concatenate([c.positions for c in clouds]),
            log_scales=np.concatenate([c.log_scales for c in clouds]),
            rotations=np.concatenate([c.rotations for c in clouds]),
            opacity_logits=np.concatenate([c.opacity_logits for c in clouds]),
            sh_coeffs=np.concatenate([c.sh_coeffs for c in clouds]),
            active_sh_degree=clouds[0].active_sh_degree,
        )

    def scales(self) -> np.ndarray:
        """Activated per-axis standard deviations exp(log_scale), shape (N, 3)."""
        return np.exp(self.log_scales)

    def opacities(self) -> np.ndarray:
        """Activated opacities sigmoid(opacity_logit), shape (N,)."""
        return sigmoid(self.opacity_logits)

    def rotation_matrices(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros((0, 3, 3))
        return quat_to_rotmat(self.rotations)

    def covariances(self) -> np.ndarray:
        """World-space 3x3 covariances R diag(s^2) R^T, shape (N, 3, 3)."""
        r = self.rotation_matrices()
        s2 = np.exp(2.0 * self.log_scales)
        return np.einsum("nij,nj,nkj->nik", r, s2, r)

    def colors(self, view_dirs: np.ndarray) -> np.ndarray:
        """View-dependent RGB from SH, offset by 0.5 and clamped at zero.

        view_dirs: (N, 3) unit vectors from camera center to each splat.
        """
        view_dirs = np.asarray(view_dirs, dtype=np.float64).reshape(len(self), 3)
        k = num_sh_coeffs(self.active_sh_degree)
        basis = sh_basis(view_dirs, self.active_sh_degree)
        raw = np.einsum("nck,nk->nc", self.sh_coeffs[:, :, :k], basis) + 0.5
        return np.maximum(raw, 0.0)
