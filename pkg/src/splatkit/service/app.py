"""HTTP surface of the reconstruction service."""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Request, UploadFile
from fastapi.responses import FileResponse, Response
from pydantic import BaseModel

from .config import ServiceConfig
from .jobs import (
    JobManager,
    JobState,
    OversizeUploadError,
    UnrecognizedPayloadError,
)


class ProgressView(BaseModel):
    iteration: int
    total: int


class JobView(BaseModel):
    id: str
    state: str
    progress: ProgressView
    created: str
    updated: str
    error: str | None = None


def create_app(config: ServiceConfig | None = None, manager: JobManager | None = None) -> FastAPI:
    """Build the service app; a caller-supplied manager enables test control."""
    if config is None:
        config = ServiceConfig()
    if manager is None:
        manager = JobManager(config)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        manager.start()
        try:
            yield
        finally:
            manager.stop()

    app = FastAPI(title="splatkit", lifespan=lifespan)
    app.state.manager = manager
    app.state.config = config

    def get_record(job_id: str):
        try:
            return manager.get(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job: {job_id}") from None

    @app.post("/jobs", response_model=JobView, response_model_exclude_none=True, status_code=201)
    async def submit_job(request: Request, capture: UploadFile | None = None) -> JobView:
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > config.max_upload_bytes + 16384:
            raise HTTPException(
                status_code=413,
                detail=f"upload exceeds limit of {config.max_upload_bytes} bytes",
            )
        if capture is None:
            raise HTTPException(
                status_code=422, detail="multipart field 'capture' is required"
            )
        try:
            record = manager.submit(capture.filename or "capture.bin", capture.file)
        except OversizeUploadError as exc:
            raise HTTPException(status_code=413, detail=str(exc)) from exc
        except UnrecognizedPayloadError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return JobView(**record.view())

    @app.get("/jobs/{job_id}", response_model=JobView, response_model_exclude_none=True)
    async def get_job(job_id: str) -> JobView:
        return JobView(**get_record(job_id).view())

    def artifact_response(job_id: str, filename: str, media_type: str) -> FileResponse:
        record = get_record(job_id)
        if record.state != JobState.READY:
            raise HTTPException(
                status_code=409,
                detail=f"{filename} not available: job state is {record.state.value}",
            )
        path = manager.job_dir(job_id) / filename
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"{filename} missing for job {job_id}")
        return FileResponse(path, media_type=media_type, filename=filename)

    @app.get("/jobs/{job_id}/model.ply")
    async def download_model(job_id: str) -> FileResponse:
        return artifact_response(job_id, "model.ply", "application/octet-stream")

    @app.get("/jobs/{job_id}/preview.png")
    async def download_preview(job_id: str) -> FileResponse:
        return artifact_response(job_id, "preview.png", "image/png")

    @app.delete("/jobs/{job_id}", status_code=204)
    async def delete_job(job_id: str) -> Response:
        try:
            manager.delete(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job: {job_id}") from None
        return Response(status_code=204)

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"status": "ok"}

    return app
