"""Float RGB image buffers and 8-bit PNG serialization."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidParameterError


@dataclass
class ImageBuffer:
    """RGB image with float64 pixels, nominally in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise InvalidParameterError(f"expected (H, W, 3) pixel array, got shape {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise InvalidParameterError(f"image must be at least 1x1, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_uint8(self) -> np.ndarray:
        """Quantize to 8 bits: clamp to [0, 1], then floor(v * 255 + 0.5)."""
        v = np.clip(self.pixels, 0.0, 1.0)
        return np.floor(v * 255.0 + 0.5).astype(np.uint8)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.to_uint8(), mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_png_bytes())

    @classmethod
    def from_uint8(cls, data: np.ndarray) -> "ImageBuffer":
        data = np.asarray(data)
        if data.ndim == 2:
            data = np.stack([data] * 3, axis=-1)
        if data.shape[-1] == 4:
            data = data[..., :3]
        return cls(pixels=data.astype(np.float64) / 255.0)

    @classmethod
    def load(cls, path: str | Path) -> "ImageBuffer":
        with Image.open(path) as img:
            return cls.from_uint8(np.asarray(img.convert("RGB")))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ImageBuffer":
        with Image.open(io.BytesIO(data)) as img:
            return cls.from_uint8(np.asarray(img.convert("RGB")))
