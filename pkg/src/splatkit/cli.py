"""Command-line interface: inspect, convert, render, train, bench, serve.

Every command exits 0 on success; failures print a single `error: ...` line
to stderr and exit nonzero.
"""

from __future__ import annotations

import socket
import sys
import time
from pathlib import Path

import click
import numpy as np

from .camera import CameraIntrinsics, OrbitPath
from .errors import SplatkitError
from .io.colmap import read_colmap_sparse
from .io.dataset import assemble_dataset, find_images_dir
from .io.ply import load_splat_ply, save_splat_ply
from .model import SplatCloud
from .render import render
from .train import TrainConfig, load_train_config, train


def _parse_resolution(value: str) -> tuple[int, int]:
    parts = value.lower().split("x")
    if len(parts) != 2:
        raise click.BadParameter(f"expected WxH, got {value!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError:
        raise click.BadParameter(f"expected WxH, got {value!r}") from None
    if width < 1 or height < 1:
        raise click.BadParameter(f"resolution must be positive, got {value!r}")
    return width, height


def _parse_vec3(value: str) -> tuple[float, float, float]:
    parts = value.split(",")
    if len(parts) != 3:
        raise click.BadParameter(f"expected X,Y,Z, got {value!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise click.BadParameter(f"expected numbers X,Y,Z, got {value!r}") from None


def _orbit_intrinsics(resolution: tuple[int, int], fov_deg: float) -> CameraIntrinsics:
    width, height = resolution
    fx = (width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    return CameraIntrinsics(width, height, fx, fx, width / 2.0, height / 2.0)


def _default_orbit(cloud: SplatCloud, frames: int) -> OrbitPath:
    """Orbit framing the cloud: centered on its centroid, radius from extent."""
    if len(cloud):
        center = cloud.positions.mean(axis=0)
        extent = float(np.linalg.norm(cloud.positions - center, axis=1).max())
    else:
        center = np.zeros(3)
        extent = 0.0
    radius = max(2.5 * extent, 1.0)
    return OrbitPath(center=center, radius=radius, height=0.5 * radius, frames=frames)


@click.group()
def cli() -> None:
    """Gaussian-splat toolkit: inspect, convert, render, train, bench, serve."""


@cli.command("info")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def cmd_info(path: str) -> None:
    """Print a summary of a splat PLY file."""
    cloud = load_splat_ply(path)
    click.echo(f"count: {len(cloud)}")
    click.echo(f"sh_degree: {cloud.active_sh_degree}")
    if len(cloud):
        lo = cloud.positions.min(axis=0)
        hi = cloud.positions.max(axis=0)
        click.echo(f"bbox_min: {lo[0]:.6g} {lo[1]:.6g} {lo[2]:.6g}")
        click.echo(f"bbox_max: {hi[0]:.6g} {hi[1]:.6g} {hi[2]:.6g}")
        for name, values in (("opacity", cloud.opacities()), ("scale", cloud.scales().ravel())):
            p5, p50, p95 = np.percentile(values, [5, 50, 95])
            click.echo(f"{name}_p5: {p5:.6g}")
            click.echo(f"{name}_p50: {p50:.6g}")
            click.echo(f"{name}_p95: {p95:.6g}")
    else:
        click.echo("bbox_min: n/a")
        click.echo("bbox_max: n/a")


@cli.command("convert")
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.argument("dest", type=click.Path(dir_okay=False, writable=True))
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["ascii", "binary"]),
    default=None,
    help="Target encoding; defaults to the opposite of the source.",
)
def cmd_convert(src: str, dest: str, fmt: str | None) -> None:
    """Convert a splat PLY between binary and ASCII encodings."""
    raw = Path(src).read_bytes()
    cloud = load_splat_ply(src)
    if fmt is None:
        src_is_ascii = b"format ascii" in raw[:200]
        fmt = "binary" if src_is_ascii else "ascii"
    save_splat_ply(dest, cloud, ascii=(fmt == "ascii"))
    click.echo(f"wrote {fmt} PLY with {len(cloud)} splats to {dest}")


@cli.command("render")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--resolution", default="640x480", help="Output size as WxH.")
@click.option("--frames", default=1, type=click.IntRange(min=1), help="Orbit frame count.")
@click.option("--center", default=None, help="Orbit center X,Y,Z (default: cloud centroid).")
@click.option("--radius", default=None, type=float, help="Orbit radius (default: from extent).")
@click.option("--height", default=None, type=float, help="Camera height above center.")
@click.option("--fov-deg", default=60.0, type=click.FloatRange(min=1, max=179), help="Horizontal field of view.")
@click.option("--background", default="0,0,0", help="Background color R,G,B in [0,1].")
def cmd_render(
    model: str,
    out_dir: str,
    resolution: str,
    frames: int,
    center: str | None,
    radius: float | None,
    height: float | None,
    fov_deg: float,
    background: str,
) -> None:
    """Render orbit-path PNG frames of a splat model."""
    cloud = load_splat_ply(model)
    size = _parse_resolution(resolution)
    bg = _parse_vec3(background)
    default = _default_orbit(cloud, frames)
    orbit = OrbitPath(
        center=np.asarray(_parse_vec3(center)) if center is not None else default.center,
        radius=radius if radius is not None else default.radius,
        height=height if height is not None else default.height,
        frames=frames,
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    intrinsics = _orbit_intrinsics(size, fov_deg)
    for i, camera in enumerate(orbit.cameras(intrinsics)):
        image, _ = render(cloud, camera, background=bg)
        image.save_png(out / f"frame_{i:05d}.png")
    click.echo(f"wrote {frames} frames to {out}")


@cli.command("train")
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False), help="Artifact directory.")
@click.option("--iterations", default=None, type=click.IntRange(min=0), help="Optimization steps.")
@click.option("--seed", default=None, type=int, help="RNG seed for deterministic runs.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Training config YAML.")
@click.option("--downscale", default=None, type=click.FloatRange(min=1.0), help="Image downscale factor.")
@click.option("--quiet", is_flag=True, help="Suppress per-checkpoint progress lines.")
def cmd_train(
    dataset_dir: str,
    out_dir: str,
    iterations: int | None,
    seed: int | None,
    config_path: str | None,
    downscale: float | None,
    quiet: bool,
) -> None:
    """Optimize a splat model against a COLMAP-layout dataset directory."""
    overrides = {}
    if iterations is not None:
        overrides["iterations"] = iterations
    if seed is not None:
        overrides["seed"] = seed
    if downscale is not None:
        overrides["downscale"] = downscale
    if config_path is not None:
        config = load_train_config(config_path, **overrides)
    else:
        config = TrainConfig(**overrides)

    sparse = read_colmap_sparse(dataset_dir)
    images_dir = find_images_dir(dataset_dir, sparse)
    dataset = assemble_dataset(sparse, images_dir, downscale=config.downscale)

    cloud, report = train(dataset, config)
    if not quiet:
        for record in report.checkpoints:
            click.echo(record.metrics_line())

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "model.ply"
    save_splat_ply(model_path, cloud)
    (out / "metrics.txt").write_text(report.metrics_log(), "utf-8")
    click.echo(f"model: {model_path}")
    click.echo(f"final_psnr: {report.final_psnr:.4f}")


@cli.command("bench")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--resolution", default="640x480", help="Render size as WxH.")
@click.option("--frames", default=12, type=click.IntRange(min=1), help="Timed orbit frames.")
@click.option("--fov-deg", default=60.0, type=click.FloatRange(min=1, max=179), help="Horizontal field of view.")
def cmd_bench(model: str, resolution: str, frames: int, fov_deg: float) -> None:
    """Time orbit renders of a model and report median/p95 milliseconds."""
    cloud = load_splat_ply(model)
    size = _parse_resolution(resolution)
    intrinsics = _orbit_intrinsics(size, fov_deg)
    cameras = _default_orbit(cloud, frames).cameras(intrinsics)
    render(cloud, cameras[0])  # warmup outside the timed loop
    times_ms = []
    for camera in cameras:
        start = time.perf_counter()
        render(cloud, camera)
        times_ms.append((time.perf_counter() - start) * 1000.0)
    median = float(np.median(times_ms))
    p95 = float(np.percentile(times_ms, 95))
    click.echo(f"count: {len(cloud)}")
    click.echo(f"resolution: {size[0]}x{size[1]}")
    click.echo(f"frames: {frames}")
    click.echo(f"ms_median: {median:.3f}")
    click.echo(f"ms_p95: {p95:.3f}")
    click.echo(f"fps_median: {1000.0 / median:.3f}" if median > 0 else "fps_median: inf")


@cli.command("serve")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False), help="Service config YAML.")
@click.option("--host", default=None, help="Listen host (overrides config).")
@click.option("--port", default=None, type=int, help="Listen port (overrides config).")
@click.option("--data-root", default=None, type=click.Path(file_okay=False), help="Job storage root (overrides config).")
def cmd_serve(config_path: str | None, host: str | None, port: int | None, data_root: str | None) -> None:
    """Run the reconstruction HTTP service until interrupted."""
    import uvicorn

    from .service import create_app, load_service_config

    config = load_service_config(config_path, host=host, port=port, data_root=data_root)
    # Probe the address up front so a busy port fails with a clear message
    # instead of a server-log stack trace.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
        bound_port = probe.getsockname()[1]
    except OSError as exc:
        raise SplatkitError(f"cannot bind {config.host}:{config.port}: {exc}") from exc
    finally:
        probe.close()
    click.echo(f"serving on http://{config.host}:{bound_port}")
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=bound_port, log_level="warning")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return exc.exit_code or 2
    except SplatkitError as exc:
        message = " ".join(str(exc).split())
        click.echo(f"error: {message}", err=True)
        return 1
    except OSError as exc:
        message = " ".join(str(exc).split())
        click.echo(f"error: {message}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
