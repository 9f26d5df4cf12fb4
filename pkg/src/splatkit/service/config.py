"""Service configuration: YAML file, environment overrides, CLI overrides."""

from __future__ import annotations

import os
from typing import Any, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..errors import ServiceError
from ..train.config import TrainConfig

ENV_PREFIX = "SPLATKIT_"
TRAIN_ENV_PREFIX = "SPLATKIT_TRAIN_"


class ServiceConfig(BaseModel):
    """Settings for the reconstruction service.

    Every field can be set in a YAML config file, overridden by a
    ``SPLATKIT_<FIELD>`` environment variable, and finally by an explicit
    keyword override (e.g. a CLI flag).  Training settings live under
    ``train`` in YAML and ``SPLATKIT_TRAIN_<FIELD>`` in the environment.
    """

    model_config = ConfigDict(extra="forbid")

    host: str = "127.0.0.1"
    port: int = Field(default=8000, ge=0, le=65535)
    data_root: str = "./splatkit-data"
    workers: int = Field(default=1, ge=1)
    extractor_command: str = "ffmpeg -y -i {input} -vf fps={fps} {output}/frame_%05d.png"
    sfm_command: str = "colmap automatic_reconstructor --image_path {input} --workspace_path {output}"
    fps: float = Field(default=2.0, gt=0)
    max_upload_bytes: int = Field(default=512 * 1024 * 1024, ge=1)
    stage_timeout_seconds: float = Field(default=1800.0, gt=0)
    train: dict[str, Any] = Field(default_factory=dict)

    @field_validator("extractor_command", "sfm_command")
    @classmethod
    def _check_placeholders(cls, value: str) -> str:
        for placeholder in ("{input}", "{output}"):
            if placeholder not in value:
                raise ValueError(f"command template must contain {placeholder}: {value!r}")
        return value

    @field_validator("train")
    @classmethod
    def _check_train_overrides(cls, value: dict[str, Any]) -> dict[str, Any]:
        try:
            cls.train_config_from(value)
        except TypeError as exc:
            raise ValueError(f"invalid train override: {exc}") from exc
        return value

    @staticmethod
    def train_config_from(overrides: dict[str, Any]) -> TrainConfig:
        return TrainConfig(**overrides)

    @property
    def train_config(self) -> TrainConfig:
        return self.train_config_from(self.train)


def _parse_env_value(raw: str) -> Any:
    """Interpret an environment string as YAML so numbers keep their type."""
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def load_service_config(
    path: str | None = None,
    env: Mapping[str, str] | None = None,
    **overrides: Any,
) -> ServiceConfig:
    """Build a ServiceConfig from a YAML file, the environment, and overrides.

    Precedence, lowest to highest: defaults, YAML file, environment
    variables, explicit keyword overrides (None values are ignored).
    """
    if env is None:
        env = os.environ
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                loaded = yaml.safe_load(handle)
        except FileNotFoundError:
            raise ServiceError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ServiceError(f"config file is not valid YAML: {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ServiceError(f"config file must hold a mapping: {path}")
        data.update(loaded)

    train = dict(data.get("train") or {})
    for key, raw in env.items():
        if key.startswith(TRAIN_ENV_PREFIX):
            train[key[len(TRAIN_ENV_PREFIX):].lower()] = _parse_env_value(raw)
        elif key.startswith(ENV_PREFIX):
            field = key[len(ENV_PREFIX):].lower()
            if field in ServiceConfig.model_fields and field != "train":
                data[field] = _parse_env_value(raw)
    if train:
        data["train"] = train

    for key, value in overrides.items():
        if value is None:
            continue
        if key == "train":
            data["train"] = {**data.get("train", {}), **value}
        else:
            data[key] = value

    try:
        return ServiceConfig(**data)
    except Exception as exc:
        raise ServiceError(f"invalid service config: {exc}") from exc
