"""Command-line interface: info, convert, render, train, bench, serve."""

import os
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from splatkit.camera import CameraIntrinsics, OrbitPath
from splatkit.cli import main
from splatkit.image import ImageBuffer
from splatkit.io.colmap import read_colmap_sparse
from splatkit.io.dataset import assemble_dataset, find_images_dir
from splatkit.io.ply import load_splat_ply, save_splat_ply
from splatkit.model import SplatCloud
from splatkit.render.forward import render_reference
from splatkit.train import seed_from_points

from conftest import (
    cli_train_ground_truth,
    empty_cloud,
    materialize_dataset_dir,
    random_cloud,
    recovery_cameras,
)

FAST_CONFIG_YAML = (
    "iterations: 12\n"
    "densify_interval: 1000000\n"
    "sh_promote_interval: 1000000\n"
    "opacity_reset_interval: 1000000\n"
    "checkpoint_interval: 6\n"
)


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_kv(out: str) -> dict[str, str]:
    pairs = {}
    for line in out.strip().splitlines():
        if ": " in line:
            key, value = line.split(": ", 1)
            pairs[key] = value
    return pairs


def assert_cli_error(code: int, err: str) -> None:
    """Failures exit nonzero with a single machine-parsable `error:` line."""
    assert code != 0
    lines = [line for line in err.strip().splitlines() if line]
    assert len(lines) == 1, err
    assert lines[0].startswith("error: ")


def f32(cloud: SplatCloud) -> SplatCloud:
    """The cloud after the float32 quantization a PLY write imposes."""
    out = cloud.copy()
    out.positions = out.positions.astype(np.float32).astype(np.float64)
    out.log_scales = out.log_scales.astype(np.float32).astype(np.float64)
    out.rotations = out.rotations.astype(np.float32).astype(np.float64)
    out.opacity_logits = out.opacity_logits.astype(np.float32).astype(np.float64)
    out.sh_coeffs = out.sh_coeffs.astype(np.float32).astype(np.float64)
    return out


@pytest.fixture()
def model_path(tmp_path):
    cloud = random_cloud(np.random.default_rng(14), 9)
    path = tmp_path / "model.ply"
    save_splat_ply(path, cloud)
    return path


class TestInfo:
    def test_summary_lines(self, capsys, tmp_path):
        cloud = random_cloud(np.random.default_rng(2), 17)
        path = tmp_path / "cloud.ply"
        save_splat_ply(path, cloud)
        code, out, _ = run_cli(capsys, "info", str(path))
        assert code == 0
        pairs = parse_kv(out)
        assert pairs["count"] == "17"
        # the full 62-property schema always carries the degree-3 band set
        assert pairs["sh_degree"] == "3"
        lo = cloud.positions.min(axis=0)
        assert [float(v) for v in pairs["bbox_min"].split()] == pytest.approx(lo, abs=1e-4)
        hi = cloud.positions.max(axis=0)
        assert [float(v) for v in pairs["bbox_max"].split()] == pytest.approx(hi, abs=1e-4)
        for key in ("opacity_p5", "opacity_p50", "opacity_p95", "scale_p5", "scale_p50", "scale_p95"):
            assert np.isfinite(float(pairs[key]))

    def test_empty_cloud(self, capsys, tmp_path):
        path = tmp_path / "empty.ply"
        save_splat_ply(path, empty_cloud())
        code, out, _ = run_cli(capsys, "info", str(path))
        assert code == 0
        pairs = parse_kv(out)
        assert pairs["count"] == "0"
        assert pairs["bbox_min"] == "n/a"

    def test_large_count_line(self, capsys, tmp_path):
        n = 500_000
        rotations = np.zeros((n, 4))
        rotations[:, 0] = 1.0
        cloud = SplatCloud(
            positions=np.zeros((n, 3)),
            log_scales=np.full((n, 3), np.log(0.1)),
            rotations=rotations,
            opacity_logits=np.zeros(n),
            sh_coeffs=np.zeros((n, 3, 16)),
            active_sh_degree=0,
        )
        path = tmp_path / "big.ply"
        save_splat_ply(path, cloud)
        code, out, _ = run_cli(capsys, "info", str(path))
        assert code == 0
        assert "count: 500000" in out

    def test_truncated_file_reports_offset(self, capsys, tmp_path, model_path):
        clipped = tmp_path / "clipped.ply"
        clipped.write_bytes(model_path.read_bytes()[:-10])
        code, _, err = run_cli(capsys, "info", str(clipped))
        assert_cli_error(code, err)
        assert "byte offset" in err

    def test_missing_file(self, capsys):
        code, _, err = run_cli(capsys, "info", "no/such/file.ply")
        assert_cli_error(code, err)


class TestConvert:
    def test_default_flips_binary_to_ascii(self, capsys, tmp_path, model_path):
        dest = tmp_path / "out.ply"
        code, out, _ = run_cli(capsys, "convert", str(model_path), str(dest))
        assert code == 0
        assert "wrote ascii PLY with 9 splats" in out
        assert dest.read_bytes().startswith(b"ply\nformat ascii")

    def test_default_flips_ascii_to_binary(self, capsys, tmp_path, model_path):
        ascii_path = tmp_path / "a.ply"
        binary_path = tmp_path / "b.ply"
        run_cli(capsys, "convert", str(model_path), str(ascii_path))
        code, out, _ = run_cli(capsys, "convert", str(ascii_path), str(binary_path))
        assert code == 0
        assert "wrote binary PLY" in out
        assert b"format binary_little_endian" in binary_path.read_bytes()[:200]

    def test_round_trip_preserves_every_float(self, capsys, tmp_path, model_path):
        ascii_path = tmp_path / "a.ply"
        back_path = tmp_path / "back.ply"
        run_cli(capsys, "convert", str(model_path), str(ascii_path))
        run_cli(capsys, "convert", str(ascii_path), str(back_path), "--format", "binary")
        original = load_splat_ply(model_path)
        back = load_splat_ply(back_path)
        assert np.array_equal(original.positions, back.positions)
        assert np.array_equal(original.sh_coeffs, back.sh_coeffs)
        assert np.array_equal(original.opacity_logits, back.opacity_logits)

    def test_explicit_format_honored(self, capsys, tmp_path, model_path):
        dest = tmp_path / "still_binary.ply"
        code, out, _ = run_cli(capsys, "convert", str(model_path), str(dest), "--format", "binary")
        assert code == 0
        assert b"format binary_little_endian" in dest.read_bytes()[:200]


class TestRender:
    def test_empty_cloud_background_frame(self, capsys, tmp_path):
        path = tmp_path / "empty.ply"
        save_splat_ply(path, empty_cloud())
        out_dir = tmp_path / "frames"
        code, out, _ = run_cli(
            capsys,
            "render", str(path), str(out_dir),
            "--resolution", "32x24", "--frames", "1", "--background", "0.2,0.3,0.4",
        )
        assert code == 0
        files = sorted(out_dir.glob("*.png"))
        assert [f.name for f in files] == ["frame_00000.png"]
        image = ImageBuffer.load(files[0])
        expected = np.floor(np.array([0.2, 0.3, 0.4]) * 255 + 0.5) / 255.0
        assert image.width == 32 and image.height == 24
        assert np.abs(image.pixels - expected[None, None, :]).max() < 1e-9

    def test_repeat_runs_byte_identical(self, capsys, tmp_path, model_path):
        dirs = [tmp_path / "run_a", tmp_path / "run_b"]
        for out_dir in dirs:
            code, _, _ = run_cli(
                capsys,
                "render", str(model_path), str(out_dir),
                "--resolution", "48x36", "--frames", "2",
            )
            assert code == 0
        for name in ("frame_00000.png", "frame_00001.png"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

    def test_frames_match_reference_renderer(self, capsys, tmp_path):
        cloud = random_cloud(np.random.default_rng(21), 12)
        path = tmp_path / "cloud.ply"
        save_splat_ply(path, cloud)
        out_dir = tmp_path / "frames"
        width, height, fov, frames = 64, 48, 60.0, 3
        center, radius, orbit_height = (0.1, -0.2, 0.0), 3.5, 1.0
        code, _, _ = run_cli(
            capsys,
            "render", str(path), str(out_dir),
            "--resolution", f"{width}x{height}",
            "--frames", str(frames),
            "--center", ",".join(str(v) for v in center),
            "--radius", str(radius),
            "--height", str(orbit_height),
            "--fov-deg", str(fov),
        )
        assert code == 0
        fx = (width / 2.0) / np.tan(np.radians(fov) / 2.0)
        intr = CameraIntrinsics(width, height, fx, fx, width / 2.0, height / 2.0)
        orbit = OrbitPath(
            center=np.asarray(center), radius=radius, height=orbit_height, frames=frames
        )
        stored = f32(load_splat_ply(path))
        for i, camera in enumerate(orbit.cameras(intr)):
            golden = render_reference(stored, camera)
            produced = ImageBuffer.load(out_dir / f"frame_{i:05d}.png")
            # quantization allows half a level on top of the render tolerance
            assert np.abs(produced.pixels - golden.pixels).max() <= 0.5 / 255.0 + 1e-5

    def test_output_path_collision(self, capsys, tmp_path, model_path):
        blocker = tmp_path / "not_a_dir"
        blocker.write_text("file in the way")
        code, _, err = run_cli(capsys, "render", str(model_path), str(blocker))
        assert_cli_error(code, err)

    def test_bad_resolution(self, capsys, tmp_path, model_path):
        code, _, err = run_cli(
            capsys, "render", str(model_path), str(tmp_path / "out"), "--resolution", "640"
        )
        assert_cli_error(code, err)

    def test_bad_background(self, capsys, tmp_path, model_path):
        code, _, err = run_cli(
            capsys, "render", str(model_path), str(tmp_path / "out"), "--background", "1,2"
        )
        assert_cli_error(code, err)


class TestTrain:
    def test_zero_iterations_model_equals_seeded_cloud(self, capsys, tiny_dataset_dir, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = run_cli(
            capsys, "train", str(tiny_dataset_dir), "--out", str(out_dir), "--iterations", "0"
        )
        assert code == 0
        sparse = read_colmap_sparse(tiny_dataset_dir)
        dataset = assemble_dataset(sparse, find_images_dir(tiny_dataset_dir, sparse))
        expected = f32(seed_from_points(dataset.seed_xyz, dataset.seed_rgb))
        produced = load_splat_ply(out_dir / "model.ply")
        assert np.array_equal(produced.positions, expected.positions)
        assert np.array_equal(produced.log_scales, expected.log_scales)
        assert np.array_equal(produced.sh_coeffs, expected.sh_coeffs)
        assert "final_psnr:" in out

    def test_artifacts_and_metrics_lines(self, capsys, tiny_dataset_dir, tmp_path):
        out_dir = tmp_path / "out"
        config = tmp_path / "train.yaml"
        config.write_text(FAST_CONFIG_YAML)
        code, out, _ = run_cli(
            capsys,
            "train", str(tiny_dataset_dir), "--out", str(out_dir),
            "--config", str(config), "--seed", "7",
        )
        assert code == 0
        assert (out_dir / "model.ply").is_file()
        metrics = (out_dir / "metrics.txt").read_text().strip().splitlines()
        assert len(metrics) == 3  # checkpoints at iterations 0, 6, 12
        for line in metrics:
            iteration, count, loss, psnr, elapsed = line.split(" ")
            assert int(iteration) >= 0 and int(count) > 0
            assert np.isfinite(float(loss)) and np.isfinite(float(psnr)) and float(elapsed) >= 0
        # per-checkpoint lines echo to stdout followed by the artifact summary
        assert metrics[0] in out
        assert f"model: {out_dir / 'model.ply'}" in out

    def test_quiet_suppresses_checkpoint_lines(self, capsys, tiny_dataset_dir, tmp_path):
        config = tmp_path / "train.yaml"
        config.write_text(FAST_CONFIG_YAML)
        code, out, _ = run_cli(
            capsys,
            "train", str(tiny_dataset_dir), "--out", str(tmp_path / "out"),
            "--config", str(config), "--quiet",
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert [line.split(":")[0] for line in lines] == ["model", "final_psnr"]

    def test_same_seed_gives_identical_model_bytes(self, capsys, tiny_dataset_dir, tmp_path):
        config = tmp_path / "train.yaml"
        config.write_text(FAST_CONFIG_YAML)
        outputs = []
        for name in ("first", "second"):
            out_dir = tmp_path / name
            code, _, _ = run_cli(
                capsys,
                "train", str(tiny_dataset_dir), "--out", str(out_dir),
                "--config", str(config), "--seed", "7", "--quiet",
            )
            assert code == 0
            outputs.append((out_dir / "model.ply").read_bytes())
        assert outputs[0] == outputs[1]

    def test_two_thousand_iterations_recover_past_thirty_db(self, capsys, tmp_path):
        gt = cli_train_ground_truth()
        dataset_dir = materialize_dataset_dir(
            tmp_path / "dataset", gt, recovery_cameras(), seed_noise=0.0
        )
        config = tmp_path / "train.yaml"
        config.write_text("grad_threshold: 0.03\ncheckpoint_interval: 500\n")
        out_dir = tmp_path / "out"
        code, out, _ = run_cli(
            capsys,
            "train", str(dataset_dir), "--out", str(out_dir),
            "--config", str(config), "--iterations", "2000", "--seed", "7", "--quiet",
        )
        assert code == 0
        final_psnr = float(parse_kv(out)["final_psnr"])
        assert final_psnr > 30.0
        assert (out_dir / "model.ply").is_file()

    def test_dataset_without_sparse_model(self, capsys, tmp_path):
        (tmp_path / "empty_dataset").mkdir()
        code, _, err = run_cli(capsys, "train", str(tmp_path / "empty_dataset"))
        assert_cli_error(code, err)

    def test_bad_config_key(self, capsys, tiny_dataset_dir, tmp_path):
        config = tmp_path / "train.yaml"
        config.write_text("not_a_real_knob: 1\n")
        code, _, err = run_cli(
            capsys, "train", str(tiny_dataset_dir), "--config", str(config)
        )
        assert_cli_error(code, err)
        assert "not_a_real_knob" in err


class TestBench:
    def test_empty_cloud_reports_finite_fps(self, capsys, tmp_path):
        path = tmp_path / "empty.ply"
        save_splat_ply(path, empty_cloud())
        code, out, _ = run_cli(
            capsys, "bench", str(path), "--resolution", "64x48", "--frames", "3"
        )
        assert code == 0
        pairs = parse_kv(out)
        assert pairs["count"] == "0"
        assert pairs["resolution"] == "64x48"
        assert pairs["frames"] == "3"
        assert float(pairs["ms_median"]) > 0
        assert float(pairs["ms_p95"]) >= float(pairs["ms_median"])
        fps = float(pairs["fps_median"])
        assert np.isfinite(fps) and fps > 0

    def test_doubling_splats_bounded_slowdown(self, capsys, tmp_path):
        medians = {}
        for count in (2000, 4000):
            cloud = random_cloud(np.random.default_rng(30), count, degree=0)
            path = tmp_path / f"bench_{count}.ply"
            save_splat_ply(path, cloud)
            code, out, _ = run_cli(
                capsys, "bench", str(path), "--resolution", "320x240", "--frames", "5"
            )
            assert code == 0
            medians[count] = float(parse_kv(out)["ms_median"])
        assert medians[4000] / medians[2000] <= 3.0


class TestServe:
    def test_busy_port_fails_with_address(self, capsys, tmp_path):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            blocker.bind(("127.0.0.1", 0))
            blocker.listen(1)
            port = blocker.getsockname()[1]
            code, _, err = run_cli(
                capsys,
                "serve", "--port", str(port), "--data-root", str(tmp_path / "data"),
            )
        finally:
            blocker.close()
        assert_cli_error(code, err)
        assert f"127.0.0.1:{port}" in err

    def test_missing_config_file_named(self, capsys):
        code, _, err = run_cli(capsys, "serve", "--config", "no/such/service.yaml")
        assert_cli_error(code, err)
        assert "no/such/service.yaml" in err

    def test_serve_answers_healthz(self, tmp_path):
        import httpx

        process = subprocess.Popen(
            [
                sys.executable, "-m", "splatkit.cli",
                "serve", "--port", "0", "--data-root", str(tmp_path / "data"),
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            env={**os.environ, "PYTHONUNBUFFERED": "1"},
        )
        try:
            line = process.stdout.readline()
            assert "serving on http://" in line, line
            base = line.strip().split("serving on ", 1)[1]
            deadline = time.monotonic() + 20
            status = None
            while time.monotonic() < deadline:
                try:
                    status = httpx.get(f"{base}/healthz", timeout=1.0).status_code
                    break
                except httpx.HTTPError:
                    time.sleep(0.1)
            assert status == 200
        finally:
            process.terminate()
            process.wait(timeout=10)
