"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` records every operation as a node holding its value and a
vector-Jacobian product.  Nodes are appended in evaluation order, so the
backward pass is a single sweep in reverse index order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NotScalarLoss, ShapeMismatch

logger = logging.getLogger(__name__)

COSINE_DELTA = 1e-8
SHARPEN_FLOOR = 1e-16
BCE_CLAMP = 1e-7
EPS_MIN = 1e-7
EPS_MAX = 1e-4

Vjp = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@dataclass(frozen=True)
class NodeRef:
    """Handle to a node on a tape."""

    index: int


@dataclass
class _Node:
    value: np.ndarray
    op: str
    parents: Tuple[int, ...]
    vjp: Optional[Vjp]
    param: Optional[str] = None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tape:
    """Records a computation for one backward pass."""

    def __init__(self) -> None:
        self._nodes: List[_Node] = []
        self._params: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def reset(self) -> None:
        """Drop every recorded node, parameters included."""
        self._nodes.clear()
        self._params.clear()

    def _push(self, value: np.ndarray, op: str, parents: Sequence[NodeRef] = (), vjp: Optional[Vjp] = None) -> NodeRef:
        self._nodes.append(_Node(np.asarray(value, dtype=np.float64), op, tuple(p.index for p in parents), vjp))
        return NodeRef(len(self._nodes) - 1)

    def value(self, ref: NodeRef) -> np.ndarray:
        return self._nodes[ref.index].value

    @property
    def parameters(self) -> Dict[str, NodeRef]:
        return {name: NodeRef(i) for name, i in self._params.items()}

    # --- leaves ---

    def param(self, name: str, value: np.ndarray) -> NodeRef:
        if name in self._params:
            raise ValueError(f"parameter registered twice: {name}")
        ref = self._push(np.array(value, dtype=np.float64), "param")
        self._nodes[ref.index].param = name
        self._params[name] = ref.index
        return ref

    def const(self, value: np.ndarray) -> NodeRef:
        return self._push(np.array(value, dtype=np.float64), "const")

    def register(self, params: Mapping[str, np.ndarray]) -> Dict[str, NodeRef]:
        return {name: self.param(name, value) for name, value in params.items()}

    # --- linear algebra ---

    def matmul(self, a: NodeRef, b: NodeRef) -> NodeRef:
        A, B = self.value(a), self.value(b)
        if A.shape[-1] != B.shape[0]:
            raise ShapeMismatch(f"matmul {A.shape} @ {B.shape}")
        return self._push(A @ B, "matmul", (a, b), lambda g: (g @ B.T, A.T @ g))

    def bilinear(self, u: NodeRef, x: NodeRef, v: NodeRef) -> NodeRef:
        """UᵀXV."""
        U, X, V = self.value(u), self.value(x), self.value(v)
        if U.shape[0] != X.shape[0] or X.shape[1] != V.shape[0]:
            raise ShapeMismatch(f"bilinear U{U.shape}ᵀ X{X.shape} V{V.shape}")
        XV = X @ V
        UtX = U.T @ X

        def vjp(g: np.ndarray):
            return XV @ g.T, U @ g @ V.T, UtX.T @ g

        return self._push(U.T @ XV, "bilinear", (u, x, v), vjp)

    def reshape(self, a: NodeRef, shape: Tuple[int, ...]) -> NodeRef:
        A = self.value(a)
        return self._push(A.reshape(shape), "reshape", (a,), lambda g: (g.reshape(A.shape),))

    # --- elementwise ---

    def add(self, a: NodeRef, b: NodeRef) -> NodeRef:
        A, B = self.value(a), self.value(b)
        return self._push(A + B, "add", (a, b), lambda g: (_unbroadcast(g, A.shape), _unbroadcast(g, B.shape)))

    def subtract(self, a: NodeRef, b: NodeRef) -> NodeRef:
        A, B = self.value(a), self.value(b)
        return self._push(A - B, "subtract", (a, b), lambda g: (_unbroadcast(g, A.shape), -_unbroadcast(g, B.shape)))

    def hadamard(self, a: NodeRef, b: NodeRef) -> NodeRef:
        A, B = self.value(a), self.value(b)
        return self._push(
            A * B, "hadamard", (a, b), lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape))
        )

    def scale(self, a: NodeRef, c: float) -> NodeRef:
        return self._push(self.value(a) * c, "scale", (a,), lambda g: (g * c,))

    def shift(self, a: NodeRef, c: float) -> NodeRef:
        return self._push(self.value(a) + c, "shift", (a,), lambda g: (g,))

    def tanh(self, a: NodeRef) -> NodeRef:
        out = np.tanh(self.value(a))
        return self._push(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self, a: NodeRef) -> NodeRef:
        out = _sigmoid(self.value(a))
        return self._push(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))

    def relu(self, a: NodeRef) -> NodeRef:
        A = self.value(a)
        return self._push(np.maximum(A, 0.0), "relu", (a,), lambda g: (g * (A > 0),))

    def softplus(self, a: NodeRef) -> NodeRef:
        A = self.value(a)
        out = np.logaddexp(0.0, A)
        return self._push(out, "softplus", (a,), lambda g: (g * _sigmoid(A),))

    # --- vectors and addressing ---

    def softmax_vec(self, a: NodeRef) -> NodeRef:
        A = self.value(a)
        if A.ndim != 1:
            raise ShapeMismatch(f"softmax_vec expects a vector, got {A.shape}")
        e = np.exp(A - A.max())
        s = e / e.sum()
        return self._push(s, "softmax", (a,), lambda g: (s * (g - np.dot(g, s)),))

    def cosine_sim(self, key: NodeRef, slots: NodeRef) -> NodeRef:
        """Tr(KᵀM_i)/(‖K‖‖M_i‖ + δ) for a key against a stack of slots, shape (S,)."""
        K = self.value(key)
        M = self.value(slots)
        single = M.ndim == K.ndim
        stack = M[None] if single else M
        if stack.shape[1:] != K.shape:
            raise ShapeMismatch(f"key {K.shape} does not match slots {M.shape}")
        k_norm = np.sqrt(np.sum(K * K))
        m_norm = np.sqrt(np.sum(stack * stack, axis=(1, 2)))
        dots = np.einsum("ij,sij->s", K, stack)
        den = k_norm * m_norm + COSINE_DELTA
        sim = dots / den

        def vjp(g: np.ndarray):
            g = np.atleast_1d(g)
            coef = g / den
            k_unit = K / k_norm if k_norm > 0 else np.zeros_like(K)
            safe_m = np.where(m_norm > 0, m_norm, 1.0)
            m_unit = np.where((m_norm > 0)[:, None, None], stack / safe_m[:, None, None], 0.0)
            d_key = np.einsum("s,sij->ij", coef, stack) - np.sum(coef * sim * m_norm) * k_unit
            d_stack = coef[:, None, None] * K[None] - (coef * sim * k_norm)[:, None, None] * m_unit
            return d_key, (d_stack[0] if single else d_stack)

        return self._push(sim[0:1].reshape(()) if single else sim, "cosine_sim", (key, slots), vjp)

    def circular_convolve(self, w: NodeRef, s: NodeRef) -> NodeRef:
        """Rotate weights by shifts −1, 0, +1 with probabilities ``s``."""
        W = self.value(w)
        S = self.value(s)
        if S.shape != (3,):
            raise ShapeMismatch(f"shift distribution must have 3 entries, got {S.shape}")
        shifts = (-1, 0, 1)
        out = sum(S[j] * np.roll(W, k) for j, k in enumerate(shifts))

        def vjp(g: np.ndarray):
            dw = sum(S[j] * np.roll(g, -k) for j, k in enumerate(shifts))
            ds = np.array([np.dot(g, np.roll(W, k)) for k in shifts])
            return dw, ds

        return self._push(out, "circular_convolve", (w, s), vjp)

    def sharpen(self, w: NodeRef, gamma: NodeRef) -> NodeRef:
        """w^γ renormalized; ``gamma`` is a single-element node."""
        W = self.value(w)
        G = self.value(gamma)
        gam = float(G.reshape(-1)[0])
        logs = np.log(W + SHARPEN_FLOOR)
        p = np.exp(gam * logs)
        Z = p.sum()
        out = p / Z

        def vjp(g: np.ndarray):
            dp = (g - np.dot(g, out)) / Z
            dw = dp * gam * p / (W + SHARPEN_FLOOR)
            dgamma = np.full(G.shape, np.dot(dp, p * logs))
            return dw, dgamma

        return self._push(out, "sharpen", (w, gamma), vjp)

    # --- reductions and loss ---

    def sum_elements(self, a: NodeRef) -> NodeRef:
        A = self.value(a)
        return self._push(np.array([[A.sum()]]), "sum", (a,), lambda g: (np.full(A.shape, g.reshape(-1)[0]),))

    def bce_loss(self, probs: NodeRef, targets: np.ndarray) -> NodeRef:
        """Mean binary cross-entropy with probabilities clamped to [1e-7, 1−1e-7]."""
        P = self.value(probs)
        T = np.asarray(targets, dtype=np.float64)
        if P.shape != T.shape:
            raise ShapeMismatch(f"probs {P.shape} vs targets {T.shape}")
        clipped = np.clip(P, BCE_CLAMP, 1.0 - BCE_CLAMP)
        loss = -np.mean(T * np.log(clipped) + (1.0 - T) * np.log(1.0 - clipped))
        inside = (P > BCE_CLAMP) & (P < 1.0 - BCE_CLAMP)

        def vjp(g: np.ndarray):
            d = (-T / clipped + (1.0 - T) / (1.0 - clipped)) / P.size
            return (g.reshape(-1)[0] * d * inside,)

        return self._push(np.array([[loss]]), "bce", (probs,), vjp)

    # --- memory ---

    def memory_read(self, memory: NodeRef, w: NodeRef) -> NodeRef:
        """Σ_i w_i M_i."""
        M = self.value(memory)
        Wt = self.value(w)
        out = np.einsum("s,sij->ij", Wt, M)
        return self._push(
            out, "memory_read", (memory, w),
            lambda g: (Wt[:, None, None] * g[None], np.einsum("sij,ij->s", M, g)),
        )

    def memory_write(self, memory: NodeRef, w: NodeRef, erase: NodeRef, add: NodeRef) -> NodeRef:
        """M_i ⊙ (1 − w_i E) + w_i A for every slot."""
        M = self.value(memory)
        Wt = self.value(w)
        E = self.value(erase)
        A = self.value(add)
        keep = 1.0 - Wt[:, None, None] * E[None]
        out = M * keep + Wt[:, None, None] * A[None]

        def vjp(g: np.ndarray):
            d_mem = g * keep
            d_w = np.einsum("sij,sij->s", g, A[None] - M * E[None])
            d_erase = -np.einsum("s,sij->ij", Wt, g * M)
            d_add = np.einsum("s,sij->ij", Wt, g)
            return d_mem, d_w, d_erase, d_add

        return self._push(out, "memory_write", (memory, w, erase, add), vjp)

    # --- backward ---

    def backward(self, loss: NodeRef) -> Dict[str, np.ndarray]:
        """Gradients of a 1x1 loss with respect to every registered parameter."""
        seed = self.value(loss)
        if seed.size != 1:
            raise NotScalarLoss(f"loss must be 1x1, got shape {seed.shape}")
        grads: List[Optional[np.ndarray]] = [None] * len(self._nodes)
        grads[loss.index] = np.ones_like(seed)
        for idx in range(loss.index, -1, -1):
            g = grads[idx]
            node = self._nodes[idx]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                grads[parent] = pg if grads[parent] is None else grads[parent] + pg
        return {
            name: (grads[i] if grads[i] is not None else np.zeros_like(self._nodes[i].value))
            for name, i in self._params.items()
        }


def backward(tape: Tape, loss: NodeRef) -> Dict[str, np.ndarray]:
    return tape.backward(loss)


LossBuilder = Callable[[Tape, Dict[str, NodeRef]], NodeRef]


def loss_and_grads(builder: LossBuilder, params: Mapping[str, np.ndarray]) -> Tuple[float, Dict[str, np.ndarray]]:
    tape = Tape()
    refs = tape.register(params)
    loss = builder(tape, refs)
    return float(tape.value(loss).reshape(-1)[0]), tape.backward(loss)


def _loss_only(builder: LossBuilder, params: Mapping[str, np.ndarray]) -> float:
    tape = Tape()
    loss = builder(tape, {name: tape.const(v) for name, v in params.items()})
    return float(tape.value(loss).reshape(-1)[0])


def grad_check(
    builder: LossBuilder,
    params: Mapping[str, np.ndarray],
    eps: float = 1e-6,
    n_coords: int = 200,
    rng: Optional[np.random.Generator] = None,
    atol: float = 1e-4,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Samples ``n_coords`` coordinates across all parameters (all of them when
    there are fewer).  The error is |a − n| / max(|a|, |n|, atol).
    """
    if not EPS_MIN <= eps <= EPS_MAX:
        raise ConfigError(f"eps must lie in [{EPS_MIN:g}, {EPS_MAX:g}], got {eps:g}")
    rng = rng if rng is not None else np.random.default_rng(0)
    base = {name: np.array(v, dtype=np.float64) for name, v in params.items()}
    _, analytic = loss_and_grads(builder, base)
    coords = [(name, flat) for name, v in base.items() for flat in range(v.size)]
    if len(coords) > n_coords:
        picks = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]
    worst = 0.0
    for name, flat in coords:
        arr = base[name].reshape(-1)
        orig = arr[flat]
        arr[flat] = orig + eps
        up = _loss_only(builder, base)
        arr[flat] = orig - eps
        down = _loss_only(builder, base)
        arr[flat] = orig
        numeric = (up - down) / (2.0 * eps)
        exact = float(analytic[name].reshape(-1)[flat])
        err = abs(exact - numeric) / max(abs(exact), abs(numeric), atol)
        worst = max(worst, err)
    logger.info("grad_check over %d coordinates: max relative error %.3e", len(coords), worst)
    return worst
