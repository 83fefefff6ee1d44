"""Memory curve of matrix dynamics with one queued state fed back.

The augmented recursion adds X(n−2) to the update.  Its mean and
covariance are series over repeated applications of the operators

    F_U(A) = Σ_k U^{kT} A U^k        G(A) = Σ_k U^{kT} A V^k

truncated at ``m_max`` memory contributions.  The full series diverges,
so ``m_max`` is always explicit.
"""
from __future__ import annotations

import logging
from collections import deque
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import NonConvergent, ShapeMismatch, SimulationOverflow, SingularCovariance
from .fmc import _power_majorant_at, _quadratic_scale, _trace_quadratic, _truncation_bound, fmc
from .linalg import cholesky, solve_discrete_lyapunov, solve_discrete_sylvester_sum, spd_inverse
from .models import (
    FmcSeries,
    LinearMatrixDynamics,
    MemCovariances,
    MemoryAugmentedDynamics,
    MemoryCapacityReport,
)

logger = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e12


def _require_single_slot(dyn: MemoryAugmentedDynamics) -> None:
    if dyn.p != 1:
        raise ShapeMismatch(f"memory curve series are defined for p=1 only, got p={dyn.p}")


def _nested_lyapunov(A: np.ndarray, m_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (F(I), Σ_{m=1}^{m_max} F^{m+1}(I)) for F(X) = Σ_k A^{kT} X A^k."""
    term = solve_discrete_lyapunov(A, np.eye(A.shape[0]))
    state = term
    mem = np.zeros_like(term)
    for _ in range(m_max):
        term = solve_discrete_lyapunov(A, term)
        mem = mem + term
    return state, mem


def mem_covariances(dyn: MemoryAugmentedDynamics) -> MemCovariances:
    _require_single_slot(dyn)
    base = dyn.base
    base.require_stable()
    psi_state, psi_mem = _nested_lyapunov(base.U, dyn.m_max)
    sigma_state, sigma_mem = _nested_lyapunov(base.V, dyn.m_max)
    covs = MemCovariances(
        psi_state=base.eps1 * psi_state,
        psi_mem=base.eps1 * psi_mem,
        sigma_state=base.eps2 * sigma_state,
        sigma_mem=base.eps2 * sigma_mem,
    )
    logger.debug("memory covariance condition numbers: %s", covs.condition_numbers())
    return covs


def _memory_series(base: LinearMatrixDynamics, M: np.ndarray, m_max: int) -> np.ndarray:
    total = M.copy()
    term = M
    for _ in range(m_max):
        term = solve_discrete_sylvester_sum(base.U, base.V, term)
        total = total + term
    return total


def mem_mean_derivative(dyn: MemoryAugmentedDynamics, k: int) -> np.ndarray:
    """Σ_{m=0}^{m_max} G^m(U^{kT} W V^k)."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    _require_single_slot(dyn)
    base = dyn.base
    base.require_stable()
    M = np.linalg.matrix_power(base.U.T, k) @ base.W @ np.linalg.matrix_power(base.V, k)
    return _memory_series(base, M, dyn.m_max)


def mem_fmc(dyn: MemoryAugmentedDynamics) -> FmcSeries:
    """Augmented memory curve J′(0..k_max).

    G commutes with the lag map A ↦ UᵀAV, so the lag-k derivative is the
    lag map applied k times to the lag-0 derivative.
    """
    covs = mem_covariances(dyn)
    base = dyn.base
    psi_factor = cholesky(covs.psi_total, "Psi_total")
    sigma_factor = cholesky(covs.sigma_total, "Sigma_total")
    D0 = _memory_series(base, base.W, dyn.m_max)
    D = D0
    values = np.empty(dyn.k_max + 1)
    for k in range(dyn.k_max + 1):
        values[k] = _trace_quadratic(sigma_factor, psi_factor, D)
        D = base.U.T @ D @ base.V
    scale = _quadratic_scale(covs.sigma_total, covs.psi_total, D0)
    next_bound = _power_majorant_at(dyn.k_max + 1, scale, base.U, base.V)
    bound = _truncation_bound(values[-1], base.stability_product ** 2, next_bound)
    return FmcSeries(values=values, truncation_error_bound=bound)


def memory_fraction(state_cov: np.ndarray, mem_cov: np.ndarray) -> np.ndarray:
    """I − S⁻¹(M⁻¹ + S⁻¹)⁻¹, the share of precision the memory removes."""
    if not np.any(mem_cov):
        raise SingularCovariance("memory covariance is zero (m_max = 0)")
    state_inv = spd_inverse(state_cov, "state covariance")
    mem_inv = spd_inverse(mem_cov, "memory covariance")
    return np.eye(state_cov.shape[0]) - state_inv @ spd_inverse(mem_inv + state_inv, "precision sum")


def mem_fmc_decomposed(dyn: MemoryAugmentedDynamics, k: int) -> float:
    """J′(k) split into a memory-driven trace and a state-driven trace.

    Uses the Woodbury form (S + M)⁻¹ = MF·S⁻¹ for both covariances.
    """
    if dyn.m_max < 1:
        raise SingularCovariance("decomposed form needs m_max >= 1")
    covs = mem_covariances(dyn)
    base = dyn.base
    sigma_prec = memory_fraction(covs.sigma_state, covs.sigma_mem) @ spd_inverse(covs.sigma_state)
    psi_prec = memory_fraction(covs.psi_state, covs.psi_mem) @ spd_inverse(covs.psi_state)
    dM = mem_mean_derivative(dyn, k)
    dM_state = np.linalg.matrix_power(base.U.T, k) @ base.W @ np.linalg.matrix_power(base.V, k)
    dM_mem = dM - dM_state
    memory_part = np.trace(sigma_prec @ dM_mem.T @ psi_prec @ dM)
    state_part = np.trace(sigma_prec @ dM.T @ psi_prec @ dM_state)
    return float(memory_part + state_part)


def memory_capacity_report(base: LinearMatrixDynamics, m_max: int, k_max: int) -> MemoryCapacityReport:
    """Augmented capacity against the plain capacity and the 4× worst-case bound."""
    J_tot = fmc(base, k_max).capacity
    J_prime = mem_fmc(MemoryAugmentedDynamics(base, m_max=m_max, k_max=k_max)).capacity
    if J_tot > 0:
        ratio = J_prime / J_tot
    else:
        ratio = 1.0 if J_prime == 0 else float("inf")
    return MemoryCapacityReport(
        J_tot=J_tot,
        J_prime_tot=J_prime,
        ratio=ratio,
        worst_case_bound=4.0 * J_tot,
        bound_exceeded=J_prime > 4.0 * J_tot,
        exceeds_plain=J_prime > J_tot * (1.0 + 1e-12),
    )


def simulate_mem_dynamics(
    base: LinearMatrixDynamics,
    p: int,
    alpha: Sequence[float],
    signal: Sequence[float],
    steps: int,
    rng: Optional[np.random.Generator] = None,
    noise_on: bool = True,
) -> List[np.ndarray]:
    """X(n) = UᵀX(n−1)V + W s(n) + Σ_t α_t X(n−1−t) + Z(n), from X(0) = 0.

    ``signal[n-1]`` drives step ``n``; a short signal is zero padded.
    Raises SimulationOverflow once any entry exceeds 1e12.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    weights = np.asarray(alpha, dtype=np.float64)
    if weights.size != p or p < 1:
        raise ShapeMismatch(f"alpha must have p={p} weights, got {weights.size}")
    if not np.isclose(weights.sum(), 1.0):
        raise ValueError(f"alpha must sum to 1, got {weights.sum():.6g}")
    if noise_on and rng is None:
        raise ValueError("noise_on requires an rng")
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    N = base.N
    scale = np.sqrt(base.eps1 * base.eps2)
    zero = np.zeros((N, N))
    # history[0] is X(n-1); history[t] is X(n-1-t)
    history: deque = deque([zero] * (p + 1), maxlen=p + 1)
    trajectory: List[np.ndarray] = []
    for n in range(1, steps + 1):
        s = signal[n - 1] if n <= signal.size else 0.0
        X = base.U.T @ history[0] @ base.V + base.W * s
        for t in range(1, p + 1):
            X = X + weights[t - 1] * history[t]
        if noise_on:
            X = X + scale * rng.standard_normal((N, N))
        if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > OVERFLOW_LIMIT:
            raise SimulationOverflow(f"state exceeded {OVERFLOW_LIMIT:g} at step {n}", step=n)
        history.appendleft(X)
        trajectory.append(X)
    return trajectory
