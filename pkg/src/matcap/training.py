"""Training loop, optimizer and evaluation for the copy and recall tasks."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .autodiff import Tape
from .checkpoint import (
    build_document,
    load_checkpoint,
    restore_accumulators,
    restore_params,
    restore_rng,
    save_checkpoint,
)
from .config import TrainConfig
from .csv_io import CURVE_COLUMNS, SWEEP_COLUMNS
from .errors import CheckpointError, ConfigError, Diverged, ShapeMismatch
from .linalg import seeded_rng
from .matntm import MatNtmModel, MatrixRnnModel, build_model
from .models import TaskSample
from .tasks import gen_assoc_recall, gen_copy_task

logger = logging.getLogger(__name__)


def _check_pairs(probs: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> None:
    if len(probs) != len(targets):
        raise ShapeMismatch(f"{len(probs)} outputs vs {len(targets)} targets")
    for p, t in zip(probs, targets):
        if np.shape(p) != np.shape(t):
            raise ShapeMismatch(f"output {np.shape(p)} vs target {np.shape(t)}")


def bce_loss(probs: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> float:
    """Mean binary cross-entropy over every bit; probabilities clamped to [1e-7, 1−1e-7]."""
    _check_pairs(probs, targets)
    if not probs:
        return 0.0
    p = np.clip(np.concatenate([np.ravel(x) for x in probs]), 1e-7, 1.0 - 1e-7)
    t = np.concatenate([np.ravel(x) for x in targets])
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))


def per_bit_error(probs: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> float:
    _check_pairs(probs, targets)
    if not probs:
        return 0.0
    p = np.concatenate([np.ravel(x) for x in probs])
    t = np.concatenate([np.ravel(x) for x in targets])
    return float(np.mean(np.abs((p >= 0.5).astype(np.float64) - t)))


@dataclass
class OptimizerState:
    """RMSprop running mean squares, one accumulator per parameter."""

    acc: Dict[str, np.ndarray] = field(default_factory=dict)
    decay: float = 0.99
    eps_stab: float = 1e-8


def rmsprop_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: OptimizerState, lr: float
) -> Dict[str, np.ndarray]:
    """acc ← d·acc + (1−d)·g²; θ ← θ − lr·g/(√acc + eps)."""
    updated: Dict[str, np.ndarray] = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            updated[name] = theta
            continue
        if np.shape(g) != np.shape(theta):
            raise ShapeMismatch(f"gradient for {name} has shape {np.shape(g)}, expected {np.shape(theta)}")
        acc = state.acc.get(name)
        if acc is None:
            acc = np.zeros_like(theta)
        acc = state.decay * acc + (1.0 - state.decay) * g * g
        state.acc[name] = acc
        updated[name] = theta - lr * g / (np.sqrt(acc) + state.eps_stab)
    return updated


def clip_by_global_norm(grads: Mapping[str, np.ndarray], clip_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm <= clip_norm or norm == 0.0:
        return dict(grads), norm
    factor = clip_norm / norm
    return {name: g * factor for name, g in grads.items()}, norm


def sample_task(config: TrainConfig, rng: np.random.Generator, length: Optional[int] = None) -> TaskSample:
    n = config.model.content
    t = config.tasks
    if config.task == "copy":
        return gen_copy_task(n, t.copy_min_len, t.copy_max_len, rng, length=length)
    item_len = length if length is not None else t.recall_item_len
    return gen_assoc_recall(n, item_len, t.recall_min_items, t.recall_max_items, rng)


def batch_gradients(
    model: MatrixRnnModel, batch: Sequence[TaskSample]
) -> Tuple[float, float, Dict[str, np.ndarray]]:
    """Mean loss, mean bit error and mean gradient over a batch, reduced in batch order."""
    total = {name: np.zeros_like(v) for name, v in model.params.items()}
    losses: List[float] = []
    errors: List[float] = []
    for sample in batch:
        tape = Tape()
        refs = tape.register(model.params)
        outputs = model.unroll(tape, refs, sample.inputs, sample.target_len)
        loss = model.sequence_loss_from_outputs(tape, outputs, sample)
        losses.append(float(tape.value(loss).reshape(-1)[0]))
        errors.append(per_bit_error([tape.value(o) for o in outputs], sample.targets))
        for name, g in tape.backward(loss).items():
            total[name] += g
    scale = 1.0 / len(batch)
    return float(np.mean(losses)), float(np.mean(errors)), {k: v * scale for k, v in total.items()}


@dataclass
class TrainResult:
    model: MatrixRnnModel
    curve: pd.DataFrame
    optimizer: OptimizerState
    iterations: int
    best_bit_error: float
    final_bce: float
    checkpoints: List[Path] = field(default_factory=list)
    start_iteration: int = 0


def _checkpoint(
    out_dir: Optional[Path], config: TrainConfig, model: MatrixRnnModel, opt: OptimizerState,
    rng: np.random.Generator, iteration: int,
) -> Optional[Path]:
    if out_dir is None:
        return None
    doc = build_document(config.model, model.params, iteration, opt, rng)
    return save_checkpoint(out_dir / "checkpoints" / f"ckpt_{iteration:07d}.json", doc)


def _resume_state(
    config: TrainConfig, path: Path | str
) -> Tuple[MatrixRnnModel, OptimizerState, np.random.Generator, int]:
    model, opt, rng, start = model_from_checkpoint(path)
    if model.config != config.model:
        raise ConfigError(f"checkpoint {path} holds a different model than the run config")
    if rng is None:
        raise CheckpointError(f"checkpoint {path} has no generator state to resume from")
    return model, opt, rng, start


def train(config: TrainConfig, out_dir: Optional[Path] = None, resume_from: Optional[Path | str] = None) -> TrainResult:
    """Seeded RMSprop training with global-norm clipping.

    One learning-curve record per iteration holds the batch loss measured
    before that iteration's update.  A non-finite loss writes a checkpoint
    and raises Diverged.  ``resume_from`` continues a checkpointed run from
    its iteration with the saved parameters, accumulators and generator, so
    the remaining iterations match an uninterrupted run.
    """
    if resume_from is not None:
        model, opt, rng, start = _resume_state(config, resume_from)
        logger.info("resuming from %s at iteration %d", resume_from, start)
    else:
        rng = seeded_rng(config.seed)
        model = build_model(config.model, rng)
        opt = OptimizerState(decay=config.rmsprop_decay, eps_stab=config.rmsprop_eps)
        start = 0
    logger.info(
        "training %s on %s: %d parameters, lr=%g, batch=%d, clip=%g",
        config.model.kind, config.task, model.parameter_count, config.lr, config.batch_size, config.clip_norm,
    )
    records: List[Dict[str, float]] = []
    checkpoints: List[Path] = []
    best = float("inf")
    for iteration in range(start, config.max_iterations):
        batch = [sample_task(config, rng) for _ in range(config.batch_size)]
        loss, bit_error, grads = batch_gradients(model, batch)
        if not np.isfinite(loss):
            path = _checkpoint(out_dir, config, model, opt, rng, iteration)
            if path is not None:
                checkpoints.append(path)
            raise Diverged(f"non-finite loss at iteration {iteration}", iteration=iteration)
        records.append(
            {"iteration": iteration, "sequences": (iteration + 1) * config.batch_size, "bce": loss, "bit_error": bit_error}
        )
        best = min(best, bit_error)
        grads, norm = clip_by_global_norm(grads, config.clip_norm)
        model.params = rmsprop_step(model.params, grads, opt, config.lr)
        if iteration % config.log_every == 0:
            logger.info("iter %d bce=%.5f bit_error=%.4f grad_norm=%.3g", iteration, loss, bit_error, norm)
        if config.checkpoint_every and (iteration + 1) % config.checkpoint_every == 0:
            path = _checkpoint(out_dir, config, model, opt, rng, iteration + 1)
            if path is not None:
                checkpoints.append(path)
    curve = pd.DataFrame(records, columns=CURVE_COLUMNS)
    final = float(curve["bce"].iloc[-1]) if len(curve) else float("nan")
    return TrainResult(
        model=model,
        curve=curve,
        optimizer=opt,
        iterations=config.max_iterations,
        best_bit_error=best if records else float("nan"),
        final_bce=final,
        checkpoints=checkpoints,
        start_iteration=start,
    )


def model_from_checkpoint(path: Path | str) -> Tuple[MatrixRnnModel, OptimizerState, Optional[np.random.Generator], int]:
    doc = load_checkpoint(path)
    cls = MatNtmModel if doc.model.kind == "matntm" else MatrixRnnModel
    model = cls(doc.model, restore_params(doc))
    opt = OptimizerState(acc=restore_accumulators(doc))
    if doc.optimizer is not None:
        opt.decay = doc.optimizer.decay
        opt.eps_stab = doc.optimizer.eps_stab
    return model, opt, restore_rng(doc), doc.iteration


def evaluate(model: MatrixRnnModel, samples: Iterable[TaskSample]) -> Tuple[float, float]:
    """Mean BCE and mean per-bit error over samples."""
    losses, errors = [], []
    for sample in samples:
        outputs, _ = model.forward_sequence(sample.inputs, sample.target_len)
        losses.append(bce_loss(outputs, sample.targets))
        errors.append(per_bit_error(outputs, sample.targets))
    if not losses:
        return 0.0, 0.0
    return float(np.mean(losses)), float(np.mean(errors))


def evaluate_generalization(
    model: MatrixRnnModel,
    config: TrainConfig,
    sweep_values: Sequence[int],
    n_samples: int = 100,
    seed: int = 0,
) -> pd.DataFrame:
    """Cost per sequence length (copy) or item length (recall)."""
    rows = []
    for value in sweep_values:
        rng = seeded_rng(seed + int(value))
        samples = [sample_task(config, rng, length=int(value)) for _ in range(n_samples)]
        mean_bce, bit_error = evaluate(model, samples)
        rows.append({"sweep_value": int(value), "mean_bce": mean_bce, "bit_error": bit_error})
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def aggregate_curves(curves: Sequence[pd.DataFrame], column: str = "bce") -> pd.DataFrame:
    """Mean and min/max band of one learning-curve column across runs."""
    if not curves:
        return pd.DataFrame(columns=["iteration", "mean", "min", "max", "runs"])
    stacked = pd.concat([c[["iteration", column]].assign(run=i) for i, c in enumerate(curves)], ignore_index=True)
    grouped = stacked.groupby("iteration")[column]
    out = grouped.agg(["mean", "min", "max", "count"]).reset_index()
    return out.rename(columns={"count": "runs"})


def write_final_report(path: Path, result: TrainResult, config: TrainConfig, reference_count: Optional[int]) -> None:
    report = {
        "task": config.task,
        "model": config.model.kind,
        "architecture": config.model.notation,
        "seed": config.seed,
        "iterations": result.iterations,
        "parameter_count": result.model.parameter_count,
        "reference_parameter_count": reference_count,
        "best_bit_error": result.best_bit_error,
        "final_bce": result.final_bce,
        "clip_norm": config.clip_norm,
        "parameters": result.model.parameter_table().to_dict(orient="records"),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
