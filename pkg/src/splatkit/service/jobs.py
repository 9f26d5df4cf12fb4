"""Job state machine and worker pipeline for the reconstruction service.

A job moves along queued -> extracting -> sfm -> training -> ready, skipping
stages its payload makes unnecessary (a frames archive skips extraction, a
frames+sparse archive skips straight to training); any non-terminal state may
move to failed.  Each job persists as one JSON document plus plain artifact
files under ``<data_root>/jobs/<id>/``, so a restarted process picks up where
it left off by re-running the interrupted stage.
"""

from __future__ import annotations

import datetime as _dt
import enum
import os
import queue
import shlex
import shutil
import subprocess
import tarfile
import threading
import uuid
import zipfile
from pathlib import Path
from typing import BinaryIO

from pydantic import BaseModel, Field

from ..errors import ServiceError, SplatkitError, TrainCancelled
from ..image import ImageBuffer
from ..io.colmap import SparseModel, _extract_archive, read_colmap_sparse
from ..io.dataset import assemble_dataset, find_images_dir
from ..io.ply import load_splat_ply, save_splat_ply
from ..render import render
from ..train import train
from .config import ServiceConfig

MIN_FRAMES = 8
OUTPUT_TAIL_CHARS = 2000
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}
VIDEO_EXTENSIONS = {".mp4", ".mov", ".avi", ".mkv", ".webm", ".m4v"}
SPARSE_FILE_STEMS = {"cameras", "images", "points3D"}


class JobState(str, enum.Enum):
    QUEUED = "queued"
    EXTRACTING = "extracting"
    SFM = "sfm"
    TRAINING = "training"
    READY = "ready"
    FAILED = "failed"


TERMINAL_STATES = {JobState.READY, JobState.FAILED}

# Forward edges; skipped stages jump further along the chain.  Failure is
# reachable from every non-terminal state.
LEGAL_EDGES = {
    (JobState.QUEUED, JobState.EXTRACTING),
    (JobState.QUEUED, JobState.SFM),
    (JobState.QUEUED, JobState.TRAINING),
    (JobState.EXTRACTING, JobState.SFM),
    (JobState.SFM, JobState.TRAINING),
    (JobState.TRAINING, JobState.READY),
} | {(state, JobState.FAILED) for state in JobState if state not in TERMINAL_STATES}


class PayloadKind(str, enum.Enum):
    VIDEO = "video"
    FRAMES = "frames"
    FRAMES_SPARSE = "frames_sparse"


class UnrecognizedPayloadError(ServiceError):
    """Upload is not a video or frames archive; holds a detected-type hint."""

    def __init__(self, detected: str):
        super().__init__(f"unrecognized capture payload: {detected}")
        self.detected = detected


class OversizeUploadError(ServiceError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"upload of {size} bytes exceeds limit of {limit} bytes")


class JobProgress(BaseModel):
    iteration: int = 0
    total: int = 0


class Transition(BaseModel):
    frm: str
    to: str
    at: str


class JobRecord(BaseModel):
    """Persistent job state; the JSON document stored per job."""

    id: str
    state: JobState = JobState.QUEUED
    payload_kind: PayloadKind
    payload_name: str
    created: str
    updated: str
    progress: JobProgress = Field(default_factory=JobProgress)
    error: str | None = None
    transitions: list[Transition] = Field(default_factory=list)

    def view(self) -> dict:
        """The JSON shape served by GET /jobs/{id}."""
        body = {
            "id": self.id,
            "state": self.state.value,
            "progress": {"iteration": self.progress.iteration, "total": self.progress.total},
            "created": self.created,
            "updated": self.updated,
        }
        if self.error is not None:
            body["error"] = self.error
        return body


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _is_image_name(name: str) -> bool:
    return Path(name).suffix.lower() in IMAGE_EXTENSIONS


def _archive_names(path: Path) -> list[str] | None:
    """Member names if `path` is a zip or tar archive, else None."""
    if zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as zf:
            return zf.namelist()
    try:
        with tarfile.open(path) as tf:
            return tf.getnames()
    except (tarfile.TarError, OSError):
        return None


def _sniff_payload(path: Path) -> str:
    """Human-readable guess at what an unrecognized upload actually is."""
    size = path.stat().st_size
    if size == 0:
        return "empty file"
    with open(path, "rb") as handle:
        head = handle.read(16)
    if head.startswith(b"\x89PNG"):
        return "PNG image"
    if head.startswith(b"\xff\xd8\xff"):
        return "JPEG image"
    if head.startswith(b"%PDF"):
        return "PDF document"
    if head.startswith(b"ply"):
        return "PLY model"
    try:
        head.decode("ascii")
        return "plain text"
    except UnicodeDecodeError:
        return f"unknown binary (first bytes {head[:8].hex()})"


def classify_payload(path: Path, original_name: str) -> PayloadKind:
    """Decide how to process an upload, or raise UnrecognizedPayloadError.

    Archives are inspected by content: a COLMAP sparse model inside means the
    job can skip straight to training, images alone mean it skips extraction.
    Video is recognized by the uploaded filename's extension.
    """
    names = _archive_names(path)
    if names is not None:
        stems = {Path(n).stem for n in names}
        if SPARSE_FILE_STEMS <= {s.split(".")[0] for s in stems}:
            return PayloadKind.FRAMES_SPARSE
        if any(_is_image_name(n) for n in names):
            return PayloadKind.FRAMES
        raise UnrecognizedPayloadError("archive without images or a sparse model")
    if Path(original_name).suffix.lower() in VIDEO_EXTENSIONS:
        if path.stat().st_size == 0:
            raise UnrecognizedPayloadError("empty file")
        return PayloadKind.VIDEO
    raise UnrecognizedPayloadError(_sniff_payload(path))


def _substitute(template: str, **values: str) -> list[str]:
    """Split a command template and fill {placeholder} tokens."""
    args = []
    for token in shlex.split(template):
        for key, value in values.items():
            token = token.replace("{" + key + "}", value)
        args.append(token)
    return args


def _output_tail(result: subprocess.CompletedProcess) -> str:
    text = (result.stdout or b"").decode("utf-8", "replace") + (result.stderr or b"").decode(
        "utf-8", "replace"
    )
    text = text.strip()
    return text[-OUTPUT_TAIL_CHARS:]


def _reset_dir(path: Path) -> None:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)


class JobFailed(Exception):
    """Internal control flow: stage failed, message becomes job.error."""


class _JobDeleted(Exception):
    """Internal control flow: job vanished mid-processing, drop silently."""


class JobManager:
    """Owns job records, their on-disk layout, and the worker pool."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.jobs_root = Path(config.data_root) / "jobs"
        self.jobs_root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: dict[str, JobRecord] = {}
        self._cancel: dict[str, threading.Event] = {}
        self._queue: queue.Queue[str] = queue.Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._load_persisted()

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        if self._threads:
            return
        self._stop.clear()
        for i in range(self.config.workers):
            thread = threading.Thread(target=self._worker_loop, name=f"splatkit-worker-{i}", daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self, timeout: float = 10.0) -> None:
        self._stop.set()
        for event in self._cancel.values():
            event.set()
        for thread in self._threads:
            thread.join(timeout)
        self._threads.clear()

    def _load_persisted(self) -> None:
        for job_dir in sorted(self.jobs_root.iterdir() if self.jobs_root.exists() else []):
            record_path = job_dir / "job.json"
            if not record_path.is_file():
                continue
            try:
                record = JobRecord.model_validate_json(record_path.read_text("utf-8"))
            except ValueError:
                continue
            self._records[record.id] = record
            self._cancel[record.id] = threading.Event()
            if record.state not in TERMINAL_STATES:
                self._queue.put(record.id)

    # -- paths ---------------------------------------------------------------

    def job_dir(self, job_id: str) -> Path:
        return self.jobs_root / job_id

    def model_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "model.ply"

    def preview_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "preview.png"

    def metrics_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "metrics.txt"

    # -- record plumbing -----------------------------------------------------

    def _persist(self, record: JobRecord) -> None:
        record.updated = _now()
        path = self.job_dir(record.id) / "job.json"
        if not path.parent.is_dir():
            raise _JobDeleted(record.id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(record.model_dump_json(indent=2), "utf-8")
        os.replace(tmp, path)

    def _transition(self, record: JobRecord, to: JobState, error: str | None = None) -> None:
        if (record.state, to) not in LEGAL_EDGES:
            raise ServiceError(f"illegal job transition {record.state.value} -> {to.value}")
        record.transitions.append(Transition(frm=record.state.value, to=to.value, at=_now()))
        record.state = to
        record.error = error
        self._persist(record)

    def get(self, job_id: str) -> JobRecord:
        with self._lock:
            record = self._records.get(job_id)
        if record is None:
            raise KeyError(job_id)
        return record

    def list_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._records)

    # -- API operations ------------------------------------------------------

    def submit(self, filename: str, stream: BinaryIO) -> JobRecord:
        """Persist an upload, classify it, and enqueue the new job."""
        job_id = uuid.uuid4().hex
        job_dir = self.job_dir(job_id)
        capture_dir = job_dir / "capture"
        capture_dir.mkdir(parents=True)
        safe_name = Path(filename).name or "capture.bin"
        capture_path = capture_dir / safe_name

        limit = self.config.max_upload_bytes
        written = 0
        try:
            with open(capture_path, "wb") as out:
                while True:
                    chunk = stream.read(1024 * 1024)
                    if not chunk:
                        break
                    written += len(chunk)
                    if written > limit:
                        raise OversizeUploadError(written, limit)
                    out.write(chunk)
            kind = classify_payload(capture_path, safe_name)
        except Exception:
            shutil.rmtree(job_dir, ignore_errors=True)
            raise

        now = _now()
        record = JobRecord(
            id=job_id, payload_kind=kind, payload_name=safe_name, created=now, updated=now
        )
        with self._lock:
            self._records[job_id] = record
            self._cancel[job_id] = threading.Event()
        self._persist(record)
        self._queue.put(job_id)
        return record

    def delete(self, job_id: str) -> None:
        with self._lock:
            record = self._records.pop(job_id, None)
            event = self._cancel.pop(job_id, None)
        if record is None:
            raise KeyError(job_id)
        if event is not None:
            event.set()
        shutil.rmtree(self.job_dir(job_id), ignore_errors=True)

    # -- worker pipeline -----------------------------------------------------

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            try:
                job_id = self._queue.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                self._process(job_id)
            except _JobDeleted:
                pass
            except Exception as exc:  # keep the worker alive whatever a job does
                self._fail_quietly(job_id, f"internal error: {exc}")

    def _fail_quietly(self, job_id: str, message: str) -> None:
        try:
            record = self.get(job_id)
            if record.state not in TERMINAL_STATES:
                self._transition(record, JobState.FAILED, error=message)
        except (KeyError, _JobDeleted):
            pass

    def _check_cancel(self, job_id: str) -> None:
        event = self._cancel.get(job_id)
        if event is None:
            raise _JobDeleted(job_id)
        if event.is_set():
            raise _JobDeleted(job_id)

    def _process(self, job_id: str) -> None:
        try:
            record = self.get(job_id)
        except KeyError:
            raise _JobDeleted(job_id) from None
        if record.state in TERMINAL_STATES:
            return
        stages = {
            PayloadKind.VIDEO: (self._stage_extract, self._stage_sfm, self._stage_train),
            PayloadKind.FRAMES: (self._stage_sfm, self._stage_train),
            PayloadKind.FRAMES_SPARSE: (self._stage_train,),
        }[record.payload_kind]
        # After a restart the record may already sit mid-chain; skip the
        # stages whose states precede it and re-run the interrupted one.
        order = [JobState.EXTRACTING, JobState.SFM, JobState.TRAINING]
        entered = {
            self._stage_extract: JobState.EXTRACTING,
            self._stage_sfm: JobState.SFM,
            self._stage_train: JobState.TRAINING,
        }
        try:
            for stage in stages:
                if record.state != JobState.QUEUED and order.index(entered[stage]) < order.index(
                    record.state
                ):
                    continue
                self._check_cancel(job_id)
                stage(record)
            self._finish(record)
        except JobFailed as exc:
            if record.state not in TERMINAL_STATES:
                self._transition(record, JobState.FAILED, error=str(exc))
        except _JobDeleted:
            raise
        except SplatkitError as exc:
            if record.state not in TERMINAL_STATES:
                self._transition(record, JobState.FAILED, error=str(exc))

    def _enter(self, record: JobRecord, state: JobState) -> None:
        if record.state != state:
            self._transition(record, state)

    def _run_tool(self, record: JobRecord, template: str, input_path: Path, output_path: Path) -> None:
        args = _substitute(
            template,
            input=str(input_path),
            output=str(output_path),
            fps=repr(self.config.fps) if self.config.fps != int(self.config.fps) else str(int(self.config.fps)),
        )
        try:
            result = subprocess.run(
                args,
                cwd=self.job_dir(record.id),
                capture_output=True,
                timeout=self.config.stage_timeout_seconds,
            )
        except subprocess.TimeoutExpired:
            raise JobFailed(
                f"{record.state.value} stage timed out after {self.config.stage_timeout_seconds:g}s"
            ) from None
        except OSError as exc:
            raise JobFailed(f"{record.state.value} command failed to start: {exc}") from exc
        if result.returncode != 0:
            tail = _output_tail(result)
            raise JobFailed(
                f"{record.state.value} command exited with code {result.returncode}: {tail}"
            )

    def _capture_path(self, record: JobRecord) -> Path:
        return self.job_dir(record.id) / "capture" / record.payload_name

    def _count_frames(self, frames_dir: Path) -> int:
        return sum(1 for p in frames_dir.rglob("*") if p.is_file() and _is_image_name(p.name))

    def _stage_extract(self, record: JobRecord) -> None:
        self._enter(record, JobState.EXTRACTING)
        frames_dir = self.job_dir(record.id) / "frames"
        _reset_dir(frames_dir)
        self._run_tool(record, self.config.extractor_command, self._capture_path(record), frames_dir)
        count = self._count_frames(frames_dir)
        if count < MIN_FRAMES:
            raise JobFailed(f"insufficient frames: {count} < {MIN_FRAMES}")

    def _unpacked_dir(self, record: JobRecord) -> Path:
        """Unpack the uploaded archive once; reuse it across stages/restarts."""
        dest = self.job_dir(record.id) / "unpacked"
        if not dest.is_dir() or not any(dest.iterdir()):
            _reset_dir(dest)
            _extract_archive(self._capture_path(record), dest)
        return dest

    def _frames_dir(self, record: JobRecord, sparse: SparseModel | None = None) -> Path:
        if record.payload_kind == PayloadKind.VIDEO:
            return self.job_dir(record.id) / "frames"
        return find_images_dir(self._unpacked_dir(record), sparse)

    def _stage_sfm(self, record: JobRecord) -> None:
        self._enter(record, JobState.SFM)
        frames_dir = self._frames_dir(record)
        if record.payload_kind == PayloadKind.FRAMES:
            count = self._count_frames(frames_dir)
            if count < MIN_FRAMES:
                raise JobFailed(f"insufficient frames: {count} < {MIN_FRAMES}")
        sparse_dir = self.job_dir(record.id) / "sparse"
        _reset_dir(sparse_dir)
        self._run_tool(record, self.config.sfm_command, frames_dir, sparse_dir)
        try:
            read_colmap_sparse(sparse_dir)
        except FileNotFoundError as exc:
            raise JobFailed(f"sfm output invalid: {exc}") from exc
        except SplatkitError as exc:
            raise JobFailed(f"sfm output invalid: {exc}") from exc

    def _sparse_source(self, record: JobRecord) -> Path:
        if record.payload_kind == PayloadKind.FRAMES_SPARSE:
            return self._unpacked_dir(record)
        return self.job_dir(record.id) / "sparse"

    def _stage_train(self, record: JobRecord) -> None:
        self._enter(record, JobState.TRAINING)
        try:
            sparse = read_colmap_sparse(self._sparse_source(record))
        except (FileNotFoundError, SplatkitError) as exc:
            raise JobFailed(f"sparse model invalid: {exc}") from exc
        config = self.config.train_config
        dataset = assemble_dataset(sparse, self._frames_dir(record, sparse), downscale=config.downscale)

        record.progress = JobProgress(iteration=0, total=config.iterations)
        self._persist(record)
        last_save = [0.0]

        def on_progress(iteration: int, total: int) -> bool:
            event = self._cancel.get(record.id)
            if event is None or event.is_set() or self._stop.is_set():
                return False
            record.progress.iteration = max(record.progress.iteration, iteration)
            record.progress.total = total
            now = _dt.datetime.now().timestamp()
            if now - last_save[0] >= 0.5:
                last_save[0] = now
                self._persist(record)
            return True

        try:
            cloud, report = train(dataset, config, on_progress=on_progress)
        except TrainCancelled:
            if self._stop.is_set():
                # Shutdown mid-training: leave the record in Training so a
                # restarted process re-runs the stage.
                self._persist(record)
                raise _JobDeleted(record.id) from None
            raise
        except SplatkitError as exc:
            raise JobFailed(f"training failed: {exc}") from exc

        record.progress.iteration = config.iterations
        save_splat_ply(self.model_path(record.id), cloud)
        self.metrics_path(record.id).write_text(report.metrics_log(), "utf-8")
        preview, _ = render(cloud, dataset.views[0].camera, config.background)
        preview.save_png(self.preview_path(record.id))

    def _finish(self, record: JobRecord) -> None:
        if record.state in TERMINAL_STATES:
            return
        # Ready is only claimed once the artifact verifiably parses back.
        try:
            load_splat_ply(self.model_path(record.id))
        except (OSError, SplatkitError) as exc:
            raise JobFailed(f"model artifact invalid: {exc}") from exc
        self._transition(record, JobState.READY)
