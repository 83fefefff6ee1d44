"""Run configuration schemas, presets and the flat ``key = value`` loader."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "MATCAP_THREADS"
TRAINING_SEEDS = (11, 22, 33, 44, 55)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    """Shapes of the controller, heads and memory.

    ``layers`` counts recurrent layers; the token embedding sits below them.
    """

    kind: Literal["matntm", "matrnn"] = "matntm"
    content: int = Field(5, ge=1)
    hidden: int = Field(15, ge=1)
    layers: int = Field(2, ge=1)
    slots: int = Field(120, ge=1)
    slot_size: int = Field(6, ge=1)
    init_scale: float = Field(1.0, gt=0)
    output_scale: float = Field(0.3, gt=0)
    memory_init: float = 1e-6

    @property
    def token(self) -> int:
        return self.content + 1

    @property
    def notation(self) -> str:
        return f"{self.layers + 1}x[{self.hidden},{self.hidden}]"


class TaskConfig(_Strict):
    copy_min_len: int = Field(1, ge=1)
    copy_max_len: int = Field(20, ge=1)
    recall_item_len: int = Field(2, ge=1)
    recall_min_items: int = Field(2, ge=2)
    recall_max_items: int = Field(10, ge=2)

    @model_validator(mode="after")
    def _ranges(self) -> "TaskConfig":
        if self.copy_min_len > self.copy_max_len:
            raise ValueError(f"copy_min_len {self.copy_min_len} > copy_max_len {self.copy_max_len}")
        if self.recall_min_items > self.recall_max_items:
            raise ValueError(
                f"recall_min_items {self.recall_min_items} > recall_max_items {self.recall_max_items}"
            )
        return self


class TrainConfig(_Strict):
    task: Literal["copy", "recall"] = "copy"
    model: ModelConfig = Field(default_factory=ModelConfig)
    tasks: TaskConfig = Field(default_factory=TaskConfig)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(1e-4, gt=0)
    max_iterations: int = Field(100_000, ge=0)
    clip_norm: float = Field(10.0, gt=0)
    rmsprop_decay: float = Field(0.99, gt=0, lt=1)
    rmsprop_eps: float = Field(1e-8, gt=0)
    seed: int = 11
    log_every: int = Field(100, ge=1)
    checkpoint_every: int = Field(5000, ge=0)


class GradCheckConfig(_Strict):
    train: TrainConfig = Field(default_factory=lambda: preset("tiny"))
    steps: int = Field(1, ge=1)
    coords: int = Field(200, ge=1)
    eps: float = Field(1e-6, ge=1e-7, le=1e-4)
    threshold: float = Field(1e-5, gt=0)
    seed: int = 0


class SweepConfig(_Strict):
    """Flags shared by the analysis commands."""

    n: int = Field(4, ge=1)
    trials: int = Field(10, ge=0)
    radius: float = Field(0.95, gt=0, lt=1)
    seed: int = 0
    kmax: int = Field(100, ge=0)
    m_max: int = Field(3, ge=0)
    normal: bool = True
    preset: Literal["random", "scalar"] = "random"


PRESETS: Dict[str, Dict[str, Any]] = {
    "copy-matntm": {
        "task": "copy",
        "lr": 1e-4,
        "model": {"kind": "matntm", "hidden": 15, "layers": 2, "slots": 120, "slot_size": 6},
    },
    "copy-matrnn": {
        "task": "copy",
        "lr": 1e-4,
        "model": {"kind": "matrnn", "hidden": 15, "layers": 2},
    },
    "recall-matntm": {
        "task": "recall",
        "lr": 8e-5,
        "model": {"kind": "matntm", "hidden": 20, "layers": 3, "slots": 120, "slot_size": 6},
    },
    "recall-matrnn": {
        "task": "recall",
        "lr": 8e-5,
        "model": {"kind": "matrnn", "hidden": 20, "layers": 3},
    },
    "tiny": {
        "task": "copy",
        "lr": 1e-3,
        "batch_size": 2,
        "max_iterations": 50,
        "checkpoint_every": 25,
        "log_every": 10,
        "model": {"kind": "matntm", "content": 2, "hidden": 8, "layers": 1, "slots": 8, "slot_size": 3},
        "tasks": {"copy_min_len": 1, "copy_max_len": 3},
    },
}

# Parameter counts reported for the reference models, keyed by preset.
REFERENCE_PARAMETER_COUNTS = {
    "copy-matntm": 4121,
    "copy-matrnn": 2175,
    "recall-matntm": 7946,
    "recall-matrnn": 5675,
}


def _deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = _deep_merge(dict(out[key]), value)
        else:
            out[key] = value
    return out


def validate_train_config(data: Mapping[str, Any]) -> TrainConfig:
    try:
        return TrainConfig.model_validate(dict(data))
    except ValidationError as exc:
        raise ConfigError(f"invalid training config: {exc}") from exc


def preset(name: str, **overrides: Any) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset: {name} (choose from {', '.join(sorted(PRESETS))})")
    return validate_train_config(_deep_merge(PRESETS[name], overrides))


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_key_values(text: str) -> Dict[str, Any]:
    """Parse ``a.b = value`` lines into a nested dict.

    Values are read as JSON when possible (numbers, booleans, quoted
    strings), otherwise kept as bare strings.  ``#`` starts a comment.
    """
    out: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        node = out
        *parents, leaf = key.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"line {lineno}: {part} is both a value and a section")
            node = child
        if leaf in node:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        node[leaf] = _parse_value(value)
    return out


def load_config_document(path: Path | str) -> Dict[str, Any]:
    """Read a JSON or flat key-value config file into a nested dict."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold an object")
        return data
    return parse_key_values(text)


def load_train_config(
    path: Path | str | None = None,
    preset_name: str | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> TrainConfig:
    """Preset, then file, then command-line overrides, validated once at the end."""
    if preset_name and preset_name not in PRESETS:
        raise ConfigError(f"Unknown preset: {preset_name}")
    data: Dict[str, Any] = dict(PRESETS[preset_name]) if preset_name else {}
    if path is not None:
        data = _deep_merge(data, load_config_document(path))
    if overrides:
        data = _deep_merge(data, {k: v for k, v in overrides.items() if v is not None})
    return validate_train_config(data)


def validate_sweep(values: Mapping[str, Any]) -> SweepConfig:
    try:
        return SweepConfig.model_validate({k: v for k, v in values.items() if v is not None})
    except ValidationError as exc:
        raise ConfigError(f"invalid options: {exc}") from exc


def thread_count() -> int:
    """Worker cap from MATCAP_THREADS, defaulting to the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value
