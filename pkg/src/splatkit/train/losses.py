"""Photometric losses (L1 + DSSIM mix), PSNR, and their image-space gradients."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import InvalidParameterError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


def _pixels(img) -> np.ndarray:
    arr = img.pixels if hasattr(img, "pixels") else np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidParameterError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise InvalidParameterError(f"image dimensions differ: {a.shape} vs {b.shape}")


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


_KERNEL = _gaussian_kernel()


def _window_filter(x: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' correlation with the separable Gaussian window.

    The kernel is symmetric, so this operator is its own adjoint; the
    backward pass relies on that.
    """
    out = correlate1d(x, _KERNEL, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _KERNEL, axis=1, mode="constant", cval=0.0)


def _ssim_fields(x: np.ndarray, y: np.ndarray):
    """Per-pixel SSIM map and the intermediates its gradient needs.

    Window means/variances are normalized by the local window mass so
    border pixels use properly weighted statistics (a constant image has
    exactly constant mean everywhere).
    """
    mass = _window_filter(np.ones(x.shape[:2], dtype=np.float64))[:, :, None]
    mu_x = _window_filter(x) / mass
    mu_y = _window_filter(y) / mass
    v_xx = _window_filter(x * x) / mass
    v_yy = _window_filter(y * y) / mass
    v_xy = _window_filter(x * y) / mass
    sig_x = v_xx - mu_x * mu_x
    sig_y = v_yy - mu_y * mu_y
    sig_xy = v_xy - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + SSIM_C1
    a2 = 2.0 * sig_xy + SSIM_C2
    b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    b2 = sig_x + sig_y + SSIM_C2
    s = (a1 * a2) / (b1 * b2)
    return s, mass, mu_x, mu_y, a1, a2, b1, b2


def ssim(a, b) -> float:
    """Mean SSIM: 11x11 Gaussian window (sigma 1.5), per channel, averaged."""
    x = _pixels(a)
    y = _pixels(b)
    _check_same_shape(x, y)
    s, *_ = _ssim_fields(x, y)
    return float(s.mean())


def psnr(a, b) -> float:
    """10*log10(1 / MSE) with peak 1; identical images give +inf."""
    x = _pixels(a)
    y = _pixels(b)
    _check_same_shape(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def loss(rendered, target, lambda_dssim: float = 0.2) -> float:
    """(1 - lambda) * mean L1 + lambda * (1 - SSIM)."""
    return loss_with_grad(rendered, target, lambda_dssim)[0]


def loss_with_grad(rendered, target, lambda_dssim: float = 0.2):
    """Loss value and its gradient with respect to the rendered image.

    Returns (value, grad) with grad shaped like the image.
    """
    if not 0.0 <= lambda_dssim <= 1.0:
        raise InvalidParameterError(f"lambda_dssim must be in [0, 1], got {lambda_dssim}")
    x = _pixels(rendered)
    y = _pixels(target)
    _check_same_shape(x, y)
    n = x.size
    diff = x - y
    l1 = float(np.abs(diff).mean())
    grad = (1.0 - lambda_dssim) * np.sign(diff) / n

    if lambda_dssim > 0.0:
        s, mass, mu_x, mu_y, a1, a2, b1, b2 = _ssim_fields(x, y)
        value = (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - float(s.mean()))

        # dLoss/dS = -lambda / n at every pixel/channel
        w = (-lambda_dssim / n) * np.ones_like(s)
        inv_b1b2 = 1.0 / (b1 * b2)
        ds_da1 = a2 * inv_b1b2
        ds_da2 = a1 * inv_b1b2
        ds_db1 = -s / b1
        ds_db2 = -s / b2
        ds_dsig_x = ds_db2
        ds_dsig_xy = 2.0 * ds_da2
        ds_dmu_x = 2.0 * mu_y * ds_da1 + 2.0 * mu_x * ds_db1 - 2.0 * mu_x * ds_dsig_x - mu_y * ds_dsig_xy
        # x enters via mu_x = F(x)/mass, v_xx = F(x^2)/mass, v_xy = F(xy)/mass
        w_mu = w * ds_dmu_x / mass
        w_vxx = w * ds_dsig_x / mass
        w_vxy = w * ds_dsig_xy / mass
        grad += _window_filter(w_mu) + 2.0 * x * _window_filter(w_vxx) + y * _window_filter(w_vxy)
        return value, grad

    return l1, grad
