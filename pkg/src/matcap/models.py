"""Data models for matrix dynamics and analysis reports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import NonConvergent, ShapeMismatch
from .linalg import as_matrix, cholesky, spectral_radius


@dataclass(eq=False)
class LinearMatrixDynamics:
    """Matrix state recursion X(n) = UᵀX(n−1)V + W s(n) + Z(n).

    ``eps1`` and ``eps2`` are the row and column noise scales of Z.
    """

    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    eps1: float = 1.0
    eps2: float = 1.0

    def __post_init__(self) -> None:
        self.U = as_matrix(self.U, "U")
        self.V = as_matrix(self.V, "V")
        self.W = as_matrix(self.W, "W")
        n = self.U.shape[0]
        for name, arr in (("U", self.U), ("V", self.V), ("W", self.W)):
            if arr.shape != (n, n):
                raise ShapeMismatch(f"{name} must be {n}x{n}, got {arr.shape}")
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError(f"noise scales must be positive, got {self.eps1}, {self.eps2}")

    @classmethod
    def scalar(cls, u: float, v: float, w: float = 1.0, eps1: float = 1.0, eps2: float = 1.0) -> "LinearMatrixDynamics":
        return cls(np.array([[u]]), np.array([[v]]), np.array([[w]]), eps1, eps2)

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def spectral_radii(self) -> Tuple[float, float]:
        return spectral_radius(self.U), spectral_radius(self.V)

    @property
    def stability_product(self) -> float:
        rho_u, rho_v = self.spectral_radii
        return rho_u * rho_v

    def require_stable(self) -> None:
        """Both connections must be convergent for the state covariances to exist."""
        rho_u, rho_v = self.spectral_radii
        if rho_u >= 1.0 or rho_v >= 1.0:
            raise NonConvergent(f"rho(U)={rho_u:.6g}, rho(V)={rho_v:.6g}: both must be < 1")


@dataclass(eq=False)
class VectorDynamics:
    """Vector baseline x(n) = W x(n−1) + v s(n) + z(n), z ~ N(0, eps·I)."""

    W: np.ndarray
    v: np.ndarray
    eps: float = 1.0

    def __post_init__(self) -> None:
        self.W = as_matrix(self.W, "W")
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        if self.W.shape != (self.v.size, self.v.size):
            raise ShapeMismatch(f"W {self.W.shape} does not match v of length {self.v.size}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass(eq=False)
class MemoryAugmentedDynamics:
    """Matrix dynamics with a queue of ``p`` earlier states fed back with weights ``alpha``.

    ``m_max`` bounds the number of memory contributions kept in the
    covariance and mean-derivative series; ``k_max`` bounds the history sum.
    """

    base: LinearMatrixDynamics
    m_max: int = 3
    k_max: int = 200
    p: int = 1
    alpha: Tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if self.m_max < 0:
            raise ValueError(f"m_max must be >= 0, got {self.m_max}")
        if self.k_max < 0:
            raise ValueError(f"k_max must be >= 0, got {self.k_max}")
        if self.p < 1:
            raise ValueError(f"queue length p must be >= 1, got {self.p}")
        self.alpha = tuple(float(a) for a in self.alpha)
        if len(self.alpha) != self.p:
            raise ShapeMismatch(f"alpha must have {self.p} weights, got {len(self.alpha)}")


@dataclass(eq=False)
class FmcSeries:
    """Per-lag Fisher memory values with running sum and truncation estimate."""

    values: np.ndarray
    cumulative: np.ndarray = field(init=False)
    capacity: float = field(init=False)
    truncation_error_bound: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.cumulative = np.cumsum(self.values)
        self.capacity = float(self.cumulative[-1]) if self.values.size else 0.0

    @property
    def k_max(self) -> int:
        return self.values.size - 1


@dataclass(eq=False)
class MemCovariances:
    """State and memory covariances of the memory-augmented system."""

    psi_state: np.ndarray
    psi_mem: np.ndarray
    sigma_state: np.ndarray
    sigma_mem: np.ndarray

    @property
    def psi_total(self) -> np.ndarray:
        return self.psi_state + self.psi_mem

    @property
    def sigma_total(self) -> np.ndarray:
        return self.sigma_state + self.sigma_mem

    def condition_numbers(self) -> dict:
        """2-norm condition numbers; inf for an all-zero memory block."""
        return {
            name: float(np.linalg.cond(mat)) if np.any(mat) else float("inf")
            for name, mat in (
                ("psi_state", self.psi_state),
                ("psi_mem", self.psi_mem),
                ("sigma_state", self.sigma_state),
                ("sigma_mem", self.sigma_mem),
            )
        }


@dataclass
class CapacityBoundsReport:
    J_tot: float
    input_fisher: float
    J_tot_rel: float
    N: int
    normal: bool
    edge: bool
    normal_bound_satisfied: Optional[bool]
    general_bound_satisfied: bool


@dataclass
class DynamicRangeReport:
    J_tot: float
    lhs: float
    rhs: float
    expected_state_norm: float
    satisfied: bool


@dataclass
class MemoryCapacityReport:
    """Memory-augmented capacity compared with the plain system."""

    J_tot: float
    J_prime_tot: float
    ratio: float
    worst_case_bound: float
    bound_exceeded: bool
    exceeds_plain: bool


@dataclass
class VectorCapacityReport:
    J_tot: float
    input_fisher: float
    bound: float
    normal: bool
    satisfied: bool


@dataclass(eq=False)
class MemoryBank:
    """External memory: ``slots`` has shape (S, n_m, n_m)."""

    slots: np.ndarray

    def __post_init__(self) -> None:
        self.slots = np.asarray(self.slots, dtype=np.float64)
        if self.slots.ndim != 3 or self.slots.shape[1] != self.slots.shape[2]:
            raise ShapeMismatch(f"memory must have shape (S, n, n), got {self.slots.shape}")

    @classmethod
    def initial(cls, slots: int, size: int, fill: float = 1e-6) -> "MemoryBank":
        return cls(np.full((slots, size, size), fill))

    @property
    def n_slots(self) -> int:
        return self.slots.shape[0]

    @property
    def slot_size(self) -> int:
        return self.slots.shape[1]


@dataclass(eq=False)
class HeadState:
    """Squashed addressing parameters emitted by one head, plus its weighting."""

    w: np.ndarray
    K: np.ndarray
    beta: float
    g: float
    s: np.ndarray
    gamma: float
    erase: Optional[np.ndarray] = None
    add: Optional[np.ndarray] = None


@dataclass(eq=False)
class TaskSample:
    """One training sequence: input tokens, target matrices and task metadata."""

    inputs: List[np.ndarray]
    targets: List[np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def target_len(self) -> int:
        return len(self.targets)


@dataclass(eq=False)
class MatrixGaussian:
    """Matrix normal MN(mean, row_cov, col_cov); vec(X) has covariance col_cov ⊗ row_cov."""

    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = as_matrix(self.mean, "mean")
        self.row_cov = as_matrix(self.row_cov, "row_cov")
        self.col_cov = as_matrix(self.col_cov, "col_cov")
        n, p = self.mean.shape
        if self.row_cov.shape != (n, n):
            raise ShapeMismatch(f"row_cov must be {n}x{n}, got {self.row_cov.shape}")
        if self.col_cov.shape != (p, p):
            raise ShapeMismatch(f"col_cov must be {p}x{p}, got {self.col_cov.shape}")
        cholesky(self.row_cov, "row_cov")
        cholesky(self.col_cov, "col_cov")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mean.shape
