"""Generate the PLY parity fixtures shared between the server and the web client.

Writes three deterministic clouds (empty, two splats, ten thousand splats)
with the server-side writer, plus an `.expected.json` per fixture recording
the count and a set of sampled property values. The client test suite parses
the `.ply` bytes with its own reader and asserts the samples bit-equal.

Usage: python3 scripts/make_fixtures.py [out_dir]   (default tests/fixtures)
"""

import json
import sys
from pathlib import Path

import numpy as np

from splatkit.io import write_splat_ply, write_splat_ply_ascii
from splatkit.io.ply import SPLAT_PLY_PROPERTIES, _cloud_to_columns
from splatkit.model import SplatCloud, logit


def empty_cloud() -> SplatCloud:
    return SplatCloud(
        np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3, 16)), 0
    )


def two_splat_cloud() -> SplatCloud:
    """An asymmetric pair: red in front of blue along +z, offset in x."""
    positions = np.array([[-0.4, 0.0, 0.0], [0.4, 0.1, 0.6]])
    log_scales = np.log(np.array([[0.2, 0.15, 0.1], [0.25, 0.2, 0.12]]))
    rotations = np.array([[1.0, 0.0, 0.0, 0.0], [0.96, 0.2, 0.1, 0.15]])
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    opacity_logits = logit(np.array([0.9, 0.8]))
    sh = np.zeros((2, 3, 16))
    sh[0, :, 0] = [1.2, -0.8, -0.8]  # red-ish
    sh[1, :, 0] = [-0.8, -0.8, 1.2]  # blue-ish
    sh[:, :, 1:] = np.linspace(-0.25, 0.25, 2 * 3 * 15).reshape(2, 3, 15)
    return SplatCloud(positions, log_scales, rotations, opacity_logits, sh, 3)


def large_cloud(count: int = 10_000, seed: int = 418) -> SplatCloud:
    rng = np.random.default_rng(seed)
    positions = rng.uniform(-1.5, 1.5, size=(count, 3))
    log_scales = rng.uniform(np.log(0.01), np.log(0.08), size=(count, 3))
    rotations = rng.normal(size=(count, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    opacity_logits = logit(rng.uniform(0.05, 0.95, size=count))
    sh = np.zeros((count, 3, 16))
    sh[:, :, 0] = rng.uniform(-1.5, 1.5, size=(count, 3))
    sh[:, :, 1:] = rng.uniform(-0.3, 0.3, size=(count, 3, 15))
    return SplatCloud(positions, log_scales, rotations, opacity_logits, sh, 3)


def sample_rows(cloud: SplatCloud, rows: list[int], rng: np.random.Generator | None = None, extra: int = 0):
    """Sampled (row, property, value) triples; values quantized to float32."""
    cols = _cloud_to_columns(cloud).astype(np.float32)
    samples = [
        {"index": row, "property": name, "value": float(cols[row, j])}
        for row in rows
        for j, name in enumerate(SPLAT_PLY_PROPERTIES)
    ]
    if rng is not None and extra:
        for _ in range(extra):
            row = int(rng.integers(0, len(cloud)))
            j = int(rng.integers(0, len(SPLAT_PLY_PROPERTIES)))
            samples.append(
                {"index": row, "property": SPLAT_PLY_PROPERTIES[j], "value": float(cols[row, j])}
            )
    return samples


def emit(out_dir: Path, name: str, cloud: SplatCloud, samples) -> None:
    (out_dir / f"{name}.ply").write_bytes(write_splat_ply(cloud))
    expected = {"count": len(cloud), "samples": samples}
    (out_dir / f"{name}.expected.json").write_text(json.dumps(expected, indent=1) + "\n")


def main() -> None:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("tests/fixtures")
    out_dir.mkdir(parents=True, exist_ok=True)

    emit(out_dir, "empty", empty_cloud(), [])

    two = two_splat_cloud()
    emit(out_dir, "two", two, sample_rows(two, [0, 1]))
    (out_dir / "two.ascii.ply").write_bytes(write_splat_ply_ascii(two))

    large = large_cloud()
    rng = np.random.default_rng(7)
    emit(out_dir, "large10k", large, sample_rows(large, [0, len(large) - 1], rng, extra=100))

    print(f"wrote fixtures to {out_dir}")


if __name__ == "__main__":
    main()
