"""JSON checkpoints with base64 float64 payloads."""
from __future__ import annotations

import base64
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from .config import ModelConfig
from .errors import CheckpointError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TensorRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    shape: List[int]
    data: str


class OptimizerRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    decay: float
    eps_stab: float
    accumulators: List[TensorRecord]


class CheckpointDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int
    created: str
    iteration: int
    model: ModelConfig
    parameters: List[TensorRecord]
    optimizer: Optional[OptimizerRecord] = None
    rng_state: Optional[Dict[str, Any]] = None


def encode_tensor(name: str, array: np.ndarray) -> TensorRecord:
    arr = np.ascontiguousarray(array, dtype="<f8")
    return TensorRecord(name=name, shape=list(arr.shape), data=base64.b64encode(arr.tobytes(order="C")).decode("ascii"))


def decode_tensor(record: TensorRecord) -> np.ndarray:
    try:
        raw = base64.b64decode(record.data.encode("ascii"), validate=True)
    except ValueError as exc:
        raise CheckpointError(f"tensor {record.name}: bad base64 payload") from exc
    expected = int(np.prod(record.shape)) * 8
    if len(raw) != expected:
        raise CheckpointError(f"tensor {record.name}: {len(raw)} bytes for shape {record.shape}")
    return np.frombuffer(raw, dtype="<f8").reshape(record.shape).astype(np.float64)


def _encode_all(tensors: Mapping[str, np.ndarray]) -> List[TensorRecord]:
    return [encode_tensor(name, value) for name, value in tensors.items()]


def _decode_all(records: List[TensorRecord]) -> Dict[str, np.ndarray]:
    return {r.name: decode_tensor(r) for r in records}


def build_document(
    model_config: ModelConfig,
    params: Mapping[str, np.ndarray],
    iteration: int = 0,
    optimizer: Optional[Any] = None,
    rng: Optional[np.random.Generator] = None,
    created: Optional[str] = None,
) -> CheckpointDocument:
    opt = None
    if optimizer is not None:
        opt = OptimizerRecord(
            decay=optimizer.decay,
            eps_stab=optimizer.eps_stab,
            accumulators=_encode_all(optimizer.acc),
        )
    return CheckpointDocument(
        format_version=FORMAT_VERSION,
        created=created or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        iteration=iteration,
        model=model_config,
        parameters=_encode_all(params),
        optimizer=opt,
        rng_state=rng.bit_generator.state if rng is not None else None,
    )


def dumps(doc: CheckpointDocument) -> str:
    payload = doc.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def loads(text: str) -> CheckpointDocument:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version: {version!r}")
    try:
        return CheckpointDocument.model_validate(payload)
    except ValidationError as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc


def save_checkpoint(path: Path | str, doc: CheckpointDocument) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8", newline="\n")
    logger.info("wrote checkpoint %s (iteration %d)", path, doc.iteration)
    return path


def load_checkpoint(path: Path | str) -> CheckpointDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(text)


def restore_params(doc: CheckpointDocument) -> Dict[str, np.ndarray]:
    return _decode_all(doc.parameters)


def restore_accumulators(doc: CheckpointDocument) -> Dict[str, np.ndarray]:
    if doc.optimizer is None:
        return {}
    return _decode_all(doc.optimizer.accumulators)


def restore_rng(doc: CheckpointDocument) -> Optional[np.random.Generator]:
    if doc.rng_state is None:
        return None
    rng = np.random.Generator(np.random.PCG64())
    try:
        rng.bit_generator.state = doc.rng_state
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"bad rng state: {exc}") from exc
    return rng
