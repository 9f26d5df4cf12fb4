"""Bias-corrected Adam over the splat parameter groups."""

from __future__ import annotations

import numpy as np

from ..model import SplatCloud

PARAM_GROUPS = ("position", "log_scale", "rotation", "opacity", "sh_dc", "sh_rest")


def _group_views(cloud: SplatCloud) -> dict[str, np.ndarray]:
    """Writable array views of the cloud, one per parameter group."""
    return {
        "position": cloud.positions,
        "log_scale": cloud.log_scales,
        "rotation": cloud.rotations,
        "opacity": cloud.opacity_logits,
        "sh_dc": cloud.sh_coeffs[:, :, 0],
        "sh_rest": cloud.sh_coeffs[:, :, 1:],
    }


class AdamOptimizer:
    """Adam (beta1=0.9, beta2=0.999, eps=1e-15) with per-group moments.

    Moment arrays are row-aligned with the cloud; `remap` carries state
    across densification (kept rows keep their moments, appended rows start
    at zero).
    """

    def __init__(self, cloud: SplatCloud, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        for name, view in _group_views(cloud).items():
            self.m[name] = np.zeros_like(view)
            self.v[name] = np.zeros_like(view)

    def step(self, cloud: SplatCloud, grads: dict[str, np.ndarray], lrs: dict[str, float]) -> None:
        """One update over every group, in place on the cloud arrays."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        views = _group_views(cloud)
        for name in PARAM_GROUPS:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            views[name] -= lrs[name] * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def remap(self, keep_indices: np.ndarray, appended: int) -> None:
        """Reindex moments after densification: keep rows, zero-init new ones."""
        for name in PARAM_GROUPS:
            for store in (self.m, self.v):
                old = store[name]
                new = np.zeros((keep_indices.shape[0] + appended,) + old.shape[1:])
                new[: keep_indices.shape[0]] = old[keep_indices]
                store[name] = new

    def reset_group(self, name: str) -> None:
        """Zero one group's moments (used by the opacity reset)."""
        self.m[name][:] = 0.0
        self.v[name][:] = 0.0
