"""HTTP reconstruction service: upload a capture, poll the job, download splats."""

from .app import create_app
from .config import ServiceConfig, load_service_config
from .jobs import (
    JobManager,
    JobRecord,
    JobState,
    OversizeUploadError,
    PayloadKind,
    UnrecognizedPayloadError,
)

__all__ = [
    "create_app",
    "ServiceConfig",
    "load_service_config",
    "JobManager",
    "JobRecord",
    "JobState",
    "OversizeUploadError",
    "PayloadKind",
    "UnrecognizedPayloadError",
]
