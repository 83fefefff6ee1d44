"""Matrix RNN controller, slot memory and the matrix neural Turing machine.

Every layer is bilinear: a map from an a×a matrix to a b×b matrix is
``UᵀXV`` with U, V of shape a×b.  The controller embeds each token,
runs ``layers`` tanh recurrent layers, and the top hidden state feeds the
output map and, for the MatNTM, one read head and one write head.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .autodiff import NodeRef, Tape
from .config import ModelConfig
from .csv_io import DIAGNOSTICS_COLUMNS, PARAMETER_COLUMNS
from .errors import ShapeMismatch
from .models import HeadState, MemoryBank, TaskSample

logger = logging.getLogger(__name__)

SHIFTS = 3
HEADS = ("read", "write")
SCALARS = ("beta", "gate", "gamma")


@dataclass
class Diagnostics:
    """Per-step head weights (rows sum to one) and memory after each write."""

    read_weights: List[np.ndarray] = field(default_factory=list)
    write_weights: List[np.ndarray] = field(default_factory=list)
    memory: List[np.ndarray] = field(default_factory=list)

    def weight_frame(self) -> pd.DataFrame:
        """Long table (step, head, slot, weight) for heatmaps."""
        rows = []
        for head, series in (("read", self.read_weights), ("write", self.write_weights)):
            for step, w in enumerate(series):
                rows.extend({"step": step, "head": head, "slot": i, "weight": float(x)} for i, x in enumerate(w))
        return pd.DataFrame(rows, columns=DIAGNOSTICS_COLUMNS)


def _one_hot(size: int, index: int = 0) -> np.ndarray:
    out = np.zeros(size)
    out[index] = 1.0
    return out


# --- addressing, read and write on a tape ---

def address_on_tape(
    tape: Tape,
    memory: NodeRef,
    prev_w: NodeRef,
    K: NodeRef,
    beta: NodeRef,
    g: NodeRef,
    s: NodeRef,
    gamma: NodeRef,
) -> NodeRef:
    """Content lookup, gated interpolation, circular shift, sharpening.

    ``beta``, ``g`` and ``gamma`` are single-element nodes; ``s`` has three
    entries for shifts −1, 0, +1.
    """
    beta_v = tape.reshape(beta, (1,))
    g_v = tape.reshape(g, (1,))
    sim = tape.cosine_sim(K, memory)
    w_c = tape.softmax_vec(tape.hadamard(beta_v, sim))
    keep = tape.shift(tape.scale(g_v, -1.0), 1.0)
    w_g = tape.add(tape.hadamard(g_v, w_c), tape.hadamard(keep, prev_w))
    w_s = tape.circular_convolve(w_g, tape.reshape(s, (SHIFTS,)))
    return tape.sharpen(w_s, gamma)


def address(
    memory: MemoryBank,
    prev_w: np.ndarray,
    K: np.ndarray,
    beta: float,
    g: float,
    s: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Weighting over slots for already squashed head parameters."""
    if K.shape != (memory.slot_size, memory.slot_size):
        raise ShapeMismatch(f"key {K.shape} does not match slot size {memory.slot_size}")
    if np.shape(prev_w) != (memory.n_slots,):
        raise ShapeMismatch(f"prev_w must have {memory.n_slots} entries")
    tape = Tape()
    out = address_on_tape(
        tape,
        tape.const(memory.slots),
        tape.const(prev_w),
        tape.const(K),
        tape.const([beta]),
        tape.const([g]),
        tape.const(s),
        tape.const([gamma]),
    )
    return tape.value(out).copy()


def read(memory: MemoryBank, w: np.ndarray) -> np.ndarray:
    """Σ_i w_i M_i."""
    if np.shape(w) != (memory.n_slots,):
        raise ShapeMismatch(f"w must have {memory.n_slots} entries")
    tape = Tape()
    return tape.value(tape.memory_read(tape.const(memory.slots), tape.const(w))).copy()


def write(memory: MemoryBank, w: np.ndarray, Er: np.ndarray, A: np.ndarray) -> MemoryBank:
    """Erase then add, weighted per slot; returns a new bank."""
    if np.shape(w) != (memory.n_slots,):
        raise ShapeMismatch(f"w must have {memory.n_slots} entries")
    size = (memory.slot_size, memory.slot_size)
    if np.shape(Er) != size or np.shape(A) != size:
        raise ShapeMismatch(f"erase and add must be {size}")
    tape = Tape()
    out = tape.memory_write(tape.const(memory.slots), tape.const(w), tape.const(Er), tape.const(A))
    return MemoryBank(tape.value(out).copy())


def single_slot_unroll(erase_seq: Sequence[np.ndarray], add_seq: Sequence[np.ndarray]) -> np.ndarray:
    """Closed form of M_t = M_{t−1} ⊙ (1 − Er_t) + A_t from M_0 = 0.

    Equals Σ_k A_{t−k} ⊙ Π_{i<k} (1 − Er_{t−i}).
    """
    if len(erase_seq) != len(add_seq):
        raise ShapeMismatch("erase and add sequences differ in length")
    if not add_seq:
        raise ValueError("need at least one step")
    t = len(add_seq)
    total = np.zeros_like(np.asarray(add_seq[0], dtype=np.float64))
    decay = np.ones_like(total)
    for k in range(t):
        total = total + np.asarray(add_seq[t - 1 - k]) * decay
        decay = decay * (1.0 - np.asarray(erase_seq[t - 1 - k]))
    return total


# --- models ---

class MatrixRnnModel:
    """Plain matrix RNN: token embedding, recurrent stack, bilinear output map."""

    kind = "matrnn"

    def __init__(self, config: ModelConfig, params: Optional[Dict[str, np.ndarray]] = None) -> None:
        self.config = config
        shapes = self.param_shapes()
        if params is None:
            params = {name: np.zeros(shape) for name, shape in shapes.items()}
        missing = set(shapes) - set(params)
        extra = set(params) - set(shapes)
        if missing or extra:
            raise ShapeMismatch(f"parameter names differ: missing={sorted(missing)} extra={sorted(extra)}")
        for name, shape in shapes.items():
            if np.shape(params[name]) != shape:
                raise ShapeMismatch(f"{name} must have shape {shape}, got {np.shape(params[name])}")
        self.params: Dict[str, np.ndarray] = {name: np.asarray(params[name], dtype=np.float64) for name in shapes}

    # --- shapes ---

    def _bilinear(self, name: str, rows: int, cols: int, bias: bool = True) -> Dict[str, Tuple[int, ...]]:
        out = {f"{name}.U": (rows, cols), f"{name}.V": (rows, cols)}
        if bias:
            out[f"{name}.B"] = (cols, cols)
        return out

    def _layer_shapes(self, index: int) -> Dict[str, Tuple[int, ...]]:
        c = self.config
        in_dim = c.content if index == 0 else c.hidden
        name = f"layer{index}"
        return {
            f"{name}.Ux": (in_dim, c.hidden),
            f"{name}.Vx": (in_dim, c.hidden),
            f"{name}.Uh": (c.hidden, c.hidden),
            f"{name}.Vh": (c.hidden, c.hidden),
            f"{name}.B": (c.hidden, c.hidden),
        }

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        c = self.config
        shapes = self._bilinear("embed", c.token, c.content, bias=False)
        for index in range(c.layers):
            shapes.update(self._layer_shapes(index))
        shapes.update(self._bilinear("out", c.hidden, c.content))
        return shapes

    @property
    def parameter_count(self) -> int:
        return int(sum(np.prod(shape) for shape in self.param_shapes().values()))

    def parameter_table(self) -> pd.DataFrame:
        rows = [
            {"layer": name.split(".", 1)[0], "name": name, "shape": "x".join(map(str, shape)), "count": int(np.prod(shape))}
            for name, shape in self.param_shapes().items()
        ]
        return pd.DataFrame(rows, columns=PARAMETER_COLUMNS)

    # --- initialization ---

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "MatrixRnnModel":
        """Factors ~ N(0, scale²/rows), biases zero; output factors use ``output_scale``."""
        model = cls(config)
        for name, shape in model.param_shapes().items():
            suffix = name.rsplit(".", 1)[1]
            if suffix == "B":
                continue
            scale = config.output_scale if name.startswith("out.") else config.init_scale
            model.params[name] = rng.standard_normal(shape) * (scale / np.sqrt(shape[0]))
        return model

    # --- forward pieces on a tape ---

    def _bilinear_on_tape(self, tape: Tape, refs: Dict[str, NodeRef], name: str, X: NodeRef) -> NodeRef:
        out = tape.bilinear(refs[f"{name}.U"], X, refs[f"{name}.V"])
        bias = refs.get(f"{name}.B")
        return tape.add(out, bias) if bias is not None else out

    def _layer_on_tape(
        self, tape: Tape, refs: Dict[str, NodeRef], index: int, X: NodeRef, H_prev: NodeRef, R_prev: Optional[NodeRef]
    ) -> NodeRef:
        name = f"layer{index}"
        pre = tape.bilinear(refs[f"{name}.Ux"], X, refs[f"{name}.Vx"])
        pre = tape.add(pre, tape.bilinear(refs[f"{name}.Uh"], H_prev, refs[f"{name}.Vh"]))
        if R_prev is not None and f"{name}.Ur" in refs:
            pre = tape.add(pre, tape.bilinear(refs[f"{name}.Ur"], R_prev, refs[f"{name}.Vr"]))
        return tape.tanh(tape.add(pre, refs[f"{name}.B"]))

    def _heads_on_tape(self, tape: Tape, refs: Dict[str, NodeRef], top: NodeRef) -> Dict[str, Dict[str, NodeRef]]:
        return {}

    def _controller_on_tape(
        self,
        tape: Tape,
        refs: Dict[str, NodeRef],
        X_t: NodeRef,
        R_prev: Optional[NodeRef],
        H_prev: Sequence[NodeRef],
    ) -> Tuple[List[NodeRef], Dict[str, Dict[str, NodeRef]], NodeRef]:
        signal = tape.bilinear(refs["embed.U"], X_t, refs["embed.V"])
        states: List[NodeRef] = []
        for index in range(self.config.layers):
            signal = self._layer_on_tape(tape, refs, index, signal, H_prev[index], R_prev if index == 0 else None)
            states.append(signal)
        heads = self._heads_on_tape(tape, refs, signal)
        logits = self._bilinear_on_tape(tape, refs, "out", signal)
        return states, heads, logits

    def _check_token(self, X: np.ndarray) -> None:
        t = self.config.token
        if np.shape(X) != (t, t):
            raise ShapeMismatch(f"input token must be {t}x{t}, got {np.shape(X)}")

    def unroll(
        self,
        tape: Tape,
        refs: Dict[str, NodeRef],
        inputs: Sequence[np.ndarray],
        target_len: int,
        diagnostics: Optional[Diagnostics] = None,
    ) -> List[NodeRef]:
        """Record a full sequence; returns output-phase probability nodes."""
        c = self.config
        zero_token = np.zeros((c.token, c.token))
        H = [tape.const(np.zeros((c.hidden, c.hidden))) for _ in range(c.layers)]
        outputs: List[NodeRef] = []
        for t, X in enumerate(list(inputs) + [zero_token] * target_len):
            self._check_token(X)
            H, _, logits = self._controller_on_tape(tape, refs, tape.const(X), None, H)
            if t >= len(inputs):
                outputs.append(tape.sigmoid(logits))
        return outputs

    # --- public numpy API ---

    def initial_state(self) -> List[np.ndarray]:
        return [np.zeros((self.config.hidden, self.config.hidden)) for _ in range(self.config.layers)]

    def controller_step(
        self, X_t: np.ndarray, R_prev: Optional[np.ndarray], H_prev: Sequence[np.ndarray]
    ) -> Tuple[List[np.ndarray], Dict[str, Dict[str, np.ndarray]], np.ndarray]:
        """One controller step; head outputs are squashed."""
        self._check_token(X_t)
        if len(H_prev) != self.config.layers:
            raise ShapeMismatch(f"expected {self.config.layers} hidden states, got {len(H_prev)}")
        tape = Tape()
        refs = {name: tape.const(v) for name, v in self.params.items()}
        R = tape.const(R_prev) if R_prev is not None else None
        states, heads, logits = self._controller_on_tape(tape, refs, tape.const(X_t), R, [tape.const(h) for h in H_prev])
        return (
            [tape.value(s).copy() for s in states],
            {head: {k: tape.value(v).copy() for k, v in parts.items()} for head, parts in heads.items()},
            tape.value(logits).copy(),
        )

    def forward_sequence(self, inputs: Sequence[np.ndarray], target_len: int) -> Tuple[List[np.ndarray], Diagnostics]:
        tape = Tape()
        refs = {name: tape.const(v) for name, v in self.params.items()}
        diagnostics = Diagnostics()
        outputs = self.unroll(tape, refs, inputs, target_len, diagnostics)
        return [tape.value(o).copy() for o in outputs], diagnostics

    def sequence_loss(self, tape: Tape, refs: Dict[str, NodeRef], sample: TaskSample) -> NodeRef:
        """Mean BCE over every output bit of one sample."""
        outputs = self.unroll(tape, refs, sample.inputs, sample.target_len)
        return self.sequence_loss_from_outputs(tape, outputs, sample)

    @staticmethod
    def sequence_loss_from_outputs(tape: Tape, outputs: Sequence[NodeRef], sample: TaskSample) -> NodeRef:
        if not outputs:
            raise ValueError("sample has no targets")
        if len(outputs) != sample.target_len:
            raise ShapeMismatch(f"{len(outputs)} outputs vs {sample.target_len} targets")
        loss: Optional[NodeRef] = None
        for prob, target in zip(outputs, sample.targets):
            term = tape.scale(tape.bce_loss(prob, target), 1.0 / len(outputs))
            loss = term if loss is None else tape.add(loss, term)
        return loss


class MatNtmModel(MatrixRnnModel):
    """Matrix RNN controller with one read head, one write head and slot memory."""

    kind = "matntm"

    def _layer_shapes(self, index: int) -> Dict[str, Tuple[int, ...]]:
        shapes = super()._layer_shapes(index)
        if index == 0:
            c = self.config
            shapes["layer0.Ur"] = (c.slot_size, c.hidden)
            shapes["layer0.Vr"] = (c.slot_size, c.hidden)
        return shapes

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        c = self.config
        shapes = super().param_shapes()
        for head in HEADS:
            shapes.update(self._bilinear(f"{head}.key", c.hidden, c.slot_size))
            for scalar in SCALARS:
                shapes[f"{head}.{scalar}.U"] = (c.hidden, 1)
                shapes[f"{head}.{scalar}.V"] = (c.hidden, 1)
                shapes[f"{head}.{scalar}.B"] = (1, 1)
            shapes[f"{head}.shift.U"] = (c.hidden, 1)
            shapes[f"{head}.shift.V"] = (c.hidden, SHIFTS)
            shapes[f"{head}.shift.B"] = (1, SHIFTS)
        shapes.update(self._bilinear("write.erase", c.hidden, c.slot_size))
        shapes.update(self._bilinear("write.add", c.hidden, c.slot_size))
        return shapes

    def _heads_on_tape(self, tape: Tape, refs: Dict[str, NodeRef], top: NodeRef) -> Dict[str, Dict[str, NodeRef]]:
        heads: Dict[str, Dict[str, NodeRef]] = {}
        for head in HEADS:
            raw = lambda part: self._bilinear_on_tape(tape, refs, f"{head}.{part}", top)
            parts = {
                "K": raw("key"),
                "beta": tape.softplus(raw("beta")),
                "g": tape.sigmoid(raw("gate")),
                "gamma": tape.shift(tape.softplus(raw("gamma")), 1.0),
                "s": tape.softmax_vec(tape.reshape(raw("shift"), (SHIFTS,))),
            }
            if head == "write":
                parts["erase"] = tape.sigmoid(raw("erase"))
                parts["add"] = tape.tanh(raw("add"))
            heads[head] = parts
        return heads

    def _address_head(self, tape: Tape, memory: NodeRef, prev_w: NodeRef, parts: Dict[str, NodeRef]) -> NodeRef:
        return address_on_tape(
            tape, memory, prev_w, parts["K"], parts["beta"], parts["g"], parts["s"], parts["gamma"]
        )

    def initial_memory(self) -> MemoryBank:
        return MemoryBank.initial(self.config.slots, self.config.slot_size, self.config.memory_init)

    def unroll(
        self,
        tape: Tape,
        refs: Dict[str, NodeRef],
        inputs: Sequence[np.ndarray],
        target_len: int,
        diagnostics: Optional[Diagnostics] = None,
    ) -> List[NodeRef]:
        """Each step: controller, write-head addressing and write, then read."""
        c = self.config
        zero_token = np.zeros((c.token, c.token))
        H = [tape.const(np.zeros((c.hidden, c.hidden))) for _ in range(c.layers)]
        memory = tape.const(self.initial_memory().slots)
        w_read = tape.const(_one_hot(c.slots))
        w_write = tape.const(_one_hot(c.slots))
        R = tape.memory_read(memory, w_read)
        outputs: List[NodeRef] = []
        for t, X in enumerate(list(inputs) + [zero_token] * target_len):
            self._check_token(X)
            H, heads, logits = self._controller_on_tape(tape, refs, tape.const(X), R, H)
            write_parts = heads["write"]
            w_write = self._address_head(tape, memory, w_write, write_parts)
            memory = tape.memory_write(memory, w_write, write_parts["erase"], write_parts["add"])
            w_read = self._address_head(tape, memory, w_read, heads["read"])
            R = tape.memory_read(memory, w_read)
            if diagnostics is not None:
                diagnostics.write_weights.append(tape.value(w_write).copy())
                diagnostics.read_weights.append(tape.value(w_read).copy())
                diagnostics.memory.append(tape.value(memory).copy())
            if t >= len(inputs):
                outputs.append(tape.sigmoid(logits))
        return outputs

    def head_states(self, heads: Dict[str, Dict[str, np.ndarray]], w: Dict[str, np.ndarray]) -> Dict[str, HeadState]:
        """Package numpy head outputs from :meth:`controller_step` with their weightings."""
        return {
            head: HeadState(
                w=w[head],
                K=parts["K"],
                beta=float(parts["beta"].reshape(-1)[0]),
                g=float(parts["g"].reshape(-1)[0]),
                s=parts["s"],
                gamma=float(parts["gamma"].reshape(-1)[0]),
                erase=parts.get("erase"),
                add=parts.get("add"),
            )
            for head, parts in heads.items()
        }


def build_model(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> MatrixRnnModel:
    """Randomly initialized model of ``config.kind``; all-zero parameters without an rng."""
    cls = MatNtmModel if config.kind == "matntm" else MatrixRnnModel
    model = cls.initialize(config, rng) if rng is not None else cls(config)
    logger.info("built %s %s with %d parameters", config.kind, config.notation, model.parameter_count)
    return model


def matrix_rnn_baseline(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> MatrixRnnModel:
    """Same controller without memory or heads."""
    return build_model(config.model_copy(update={"kind": "matrnn"}), rng)


def forward_sequence(
    model: MatrixRnnModel, inputs: Sequence[np.ndarray], target_len: int
) -> Tuple[List[np.ndarray], Diagnostics]:
    return model.forward_sequence(inputs, target_len)


def controller_step(
    model: MatrixRnnModel, X_t: np.ndarray, R_prev: Optional[np.ndarray], H_prev: Sequence[np.ndarray]
):
    return model.controller_step(X_t, R_prev, H_prev)
