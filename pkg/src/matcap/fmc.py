"""Fisher memory curve and memory capacity of linear matrix dynamics.

The state of a stable system driven by a scalar signal through ``W`` is
matrix normal with row covariance Ψ and column covariance Σ.  The Fisher
information that the current state holds about the input ``i`` steps back
is

    J(i) = Tr(Σ⁻¹ V^{iT} Wᵀ U^i Ψ⁻¹ U^{iT} W V^i)

and the memory capacity is the sum over all lags.  A series stops once both
the estimate ``term·x/(1−x)``, ``x = (ρ_U ρ_V)²``, and the norm bound on the
next term, ``‖Σ⁻¹‖‖Ψ⁻¹‖‖W‖_F²‖U^{i+1}‖²‖V^{i+1}‖²/(1−x)``, are below tolerance.
"""
from __future__ import annotations

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import NonConvergent, ShapeMismatch
from .gaussian import input_fisher_information, kl_divergence
from .linalg import (
    as_matrix,
    cholesky,
    eig_normal,
    is_normal,
    random_convergent,
    random_normal_convergent,
    solve_discrete_lyapunov,
    spd_inverse,
    spectral_radius,
)
from .models import (
    CapacityBoundsReport,
    DynamicRangeReport,
    FmcSeries,
    LinearMatrixDynamics,
    MatrixGaussian,
    VectorCapacityReport,
    VectorDynamics,
)

logger = logging.getLogger(__name__)

SERIES_CAP = 100_000
EDGE_TOL = 1e-12


def state_covariances(dyn: LinearMatrixDynamics) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary row covariance Ψ and column covariance Σ of the state."""
    dyn.require_stable()
    eye = np.eye(dyn.N)
    psi = dyn.eps1 * solve_discrete_lyapunov(dyn.U, eye)
    sigma = dyn.eps2 * solve_discrete_lyapunov(dyn.V, eye)
    return psi, sigma


def _decay_rate(dyn: LinearMatrixDynamics) -> float:
    return dyn.stability_product ** 2


def _tail_estimate(term: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    return max(term, 0.0) * x / (1.0 - x)


class _PowerMajorant:
    """Upper bound ``scale·Π‖Aᵏ‖₂²`` on the lag-k term of a series, stepped one lag at a time."""

    def __init__(self, scale: float, *mats: np.ndarray) -> None:
        self.scale = float(scale)
        self.mats = mats
        self.powers = [np.eye(m.shape[0]) for m in mats]

    def advance(self) -> float:
        self.powers = [m @ p for m, p in zip(self.mats, self.powers)]
        return self.scale * float(np.prod([np.linalg.norm(p, 2) ** 2 for p in self.powers]))


def _power_majorant_at(k: int, scale: float, *mats: np.ndarray) -> float:
    return float(scale) * float(np.prod([np.linalg.norm(np.linalg.matrix_power(m, k), 2) ** 2 for m in mats]))


def _truncation_bound(last: float, x: float, next_bound: float) -> float:
    """Tail left after the last computed lag; ``next_bound`` bounds the first dropped term."""
    return max(_tail_estimate(last, x), next_bound / (1.0 - x))


def _quadratic_scale(sigma: np.ndarray, psi: np.ndarray, M: np.ndarray) -> float:
    """‖Σ⁻¹‖₂‖Ψ⁻¹‖₂‖M‖_F², so Tr(Σ⁻¹ Bᵀ Ψ⁻¹ B) ≤ scale·‖Uᵏ‖₂²‖Vᵏ‖₂² for B = U^{kT} M V^k."""
    inv_sigma = 1.0 / float(np.min(np.linalg.eigvalsh(sigma)))
    inv_psi = 1.0 / float(np.min(np.linalg.eigvalsh(psi)))
    return inv_sigma * inv_psi * float(np.sum(M ** 2))


def _trace_quadratic(sigma_factor, psi_factor, M: np.ndarray) -> float:
    """Tr(Σ⁻¹ Mᵀ Ψ⁻¹ M) from Cholesky factors."""
    left = scipy.linalg.cho_solve(sigma_factor, M.T)
    right = scipy.linalg.cho_solve(psi_factor, M)
    return float(np.sum(left * right.T))


def mean_derivatives(dyn: LinearMatrixDynamics, k_max: int) -> List[np.ndarray]:
    """U^{iT} W V^i for i = 0..k_max, accumulated incrementally."""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    out = [dyn.W.copy()]
    for _ in range(k_max):
        out.append(dyn.U.T @ out[-1] @ dyn.V)
    return out


def fmc(dyn: LinearMatrixDynamics, k_max: int) -> FmcSeries:
    """Fisher memory curve J(0..k_max)."""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    psi, sigma = state_covariances(dyn)
    psi_factor = cholesky(psi, "Psi")
    sigma_factor = cholesky(sigma, "Sigma")
    values = np.empty(k_max + 1)
    M = dyn.W.copy()
    for i in range(k_max + 1):
        values[i] = _trace_quadratic(sigma_factor, psi_factor, M)
        M = dyn.U.T @ M @ dyn.V
    next_bound = _power_majorant_at(k_max + 1, _quadratic_scale(sigma, psi, dyn.W), dyn.U, dyn.V)
    bound = _truncation_bound(values[-1], _decay_rate(dyn), next_bound)
    return FmcSeries(values=values, truncation_error_bound=bound)


def _sum_series(
    term_at: Callable[[int], float],
    majorant: _PowerMajorant,
    x: float,
    tol: float,
    what: str,
) -> Tuple[float, int]:
    """Sum terms until both the decay estimate and the bound on what is left fall below ``tol``."""
    total = 0.0
    for i in range(SERIES_CAP):
        term = term_at(i)
        total += term
        if _truncation_bound(term, x, majorant.advance()) < tol:
            return total, i
    raise NonConvergent(f"{what} series did not meet tol={tol:g} within {SERIES_CAP} terms")


def capacity(dyn: LinearMatrixDynamics, tol: float = 1e-12) -> float:
    """Memory capacity J_tot = Σ_i J(i)."""
    psi, sigma = state_covariances(dyn)
    psi_factor = cholesky(psi, "Psi")
    sigma_factor = cholesky(sigma, "Sigma")
    state = {"M": dyn.W.copy()}

    def term(i: int) -> float:
        if i > 0:
            state["M"] = dyn.U.T @ state["M"] @ dyn.V
        return _trace_quadratic(sigma_factor, psi_factor, state["M"])

    majorant = _PowerMajorant(_quadratic_scale(sigma, psi, dyn.W), dyn.U, dyn.V)
    total, k_star = _sum_series(term, majorant, _decay_rate(dyn), tol, "capacity")
    logger.debug("capacity converged at k*=%d: %.12g", k_star, total)
    return total


def capacity_lyapunov(dyn: LinearMatrixDynamics) -> float:
    """Capacity without truncation, from a Lyapunov equation on the lag operator.

    With K = Vᵀ ⊗ Uᵀ the lag-i mean derivative is K^i vec(W), so
    J_tot = vec(W)ᵀ P vec(W) with P = Σ_i K^{iT} (Σ⁻¹ ⊗ Ψ⁻¹) K^i.
    Cost grows as N⁶; meant as a reference for small systems.
    """
    psi, sigma = state_covariances(dyn)
    weight = np.kron(spd_inverse(sigma, "Sigma"), spd_inverse(psi, "Psi"))
    lag = np.kron(dyn.V.T, dyn.U.T)
    P = solve_discrete_lyapunov(lag, weight)
    w = dyn.W.reshape(-1, order="F")
    return float(w @ P @ w)


def capacity_normal_closed_form(dyn: LinearMatrixDynamics) -> float:
    """Exact capacity when U and V are both normal."""
    lam_u, E_u = eig_normal(dyn.U)
    lam_v, E_v = eig_normal(dyn.V)
    mod_u = np.abs(lam_u) ** 2
    mod_v = np.abs(lam_v) ** 2
    pair = np.outer(mod_u, mod_v)
    if np.any(pair >= 1.0):
        raise NonConvergent("some eigenvalue pair has |λ_U|·|λ_V| >= 1")
    if np.any(mod_u >= 1.0) or np.any(mod_v >= 1.0):
        raise NonConvergent("U and V must both be convergent")
    B = E_u.conj().T @ dyn.W @ E_v
    gain = np.outer(1.0 - mod_u, 1.0 - mod_v) / (1.0 - pair)
    return float(np.sum(gain * np.abs(B) ** 2) / (dyn.eps1 * dyn.eps2))


def _has_zero_pair(dyn: LinearMatrixDynamics) -> bool:
    lam_u = np.abs(np.linalg.eigvals(dyn.U))
    lam_v = np.abs(np.linalg.eigvals(dyn.V))
    return bool(np.min(lam_u) <= EDGE_TOL and np.min(lam_v) <= EDGE_TOL)


def capacity_bounds_report(dyn: LinearMatrixDynamics) -> CapacityBoundsReport:
    """Capacity relative to the input Fisher information, checked against both bounds.

    For normal systems the relative capacity is below one; it reaches one only
    when both connections have a zero eigenvalue, which is reported as an edge
    case.  Any convergent system stays below N².
    """
    J_tot = capacity(dyn)
    fisher_in = input_fisher_information(dyn.W, dyn.eps1, dyn.eps2)
    rel = J_tot / fisher_in if fisher_in > 0 else 0.0
    normal = is_normal(dyn.U) and is_normal(dyn.V)
    edge = normal and _has_zero_pair(dyn)
    if not normal:
        normal_ok: Optional[bool] = None
    elif edge:
        normal_ok = rel <= 1.0 + 1e-9
    else:
        normal_ok = rel < 1.0
    n_sq = dyn.N ** 2
    return CapacityBoundsReport(
        J_tot=J_tot,
        input_fisher=fisher_in,
        J_tot_rel=rel,
        N=dyn.N,
        normal=normal,
        edge=edge,
        normal_bound_satisfied=normal_ok,
        general_bound_satisfied=rel <= n_sq * (1.0 + 1e-9),
    )


def expected_state_norm(dyn: LinearMatrixDynamics, tol: float = 1e-12) -> float:
    """Stationary E[Tr(XᵀX)] under a white unit-variance signal."""
    dyn.require_stable()
    state = {"M": dyn.W.copy(), "Uk": np.eye(dyn.N), "Vk": np.eye(dyn.N)}
    noise_scale = dyn.eps1 * dyn.eps2

    def term(i: int) -> float:
        if i > 0:
            state["M"] = dyn.U.T @ state["M"] @ dyn.V
            state["Uk"] = dyn.U @ state["Uk"]
            state["Vk"] = dyn.V @ state["Vk"]
        signal = float(np.sum(state["M"] ** 2))
        noise = noise_scale * float(np.sum(state["Uk"] ** 2)) * float(np.sum(state["Vk"] ** 2))
        return signal + noise

    x = max(dyn.stability_product, *dyn.spectral_radii) ** 2
    # ‖Uᵏ‖_F² ≤ N‖Uᵏ‖₂², likewise for V
    scale = float(np.sum(dyn.W ** 2)) + noise_scale * dyn.N ** 2
    total, _ = _sum_series(term, _PowerMajorant(scale, dyn.U, dyn.V), x, tol, "state norm")
    return total


def dynamic_range_bound_check(dyn: LinearMatrixDynamics) -> DynamicRangeReport:
    """J_tot ≤ Tr(Σ⁻¹)·Tr(Ψ⁻¹)·E[Tr(XᵀX)]."""
    psi, sigma = state_covariances(dyn)
    J_tot = capacity(dyn)
    norm = expected_state_norm(dyn)
    rhs = float(np.trace(spd_inverse(sigma, "Sigma")) * np.trace(spd_inverse(psi, "Psi")) * norm)
    return DynamicRangeReport(
        J_tot=J_tot,
        lhs=J_tot,
        rhs=rhs,
        expected_state_norm=norm,
        satisfied=J_tot <= rhs * (1.0 + 1e-12),
    )


def spatiotemporal_fmm(dyn: LinearMatrixDynamics, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
    """Column factor V^j Σ⁻¹ V^{iT} and row factor U^i Ψ⁻¹ U^{jT} of the lag-(i, j) entry."""
    if i < 0 or j < 0:
        raise ValueError("lags must be nonnegative")
    psi, sigma = state_covariances(dyn)
    sigma_inv = spd_inverse(sigma, "Sigma")
    psi_inv = spd_inverse(psi, "Psi")
    U_i = np.linalg.matrix_power(dyn.U, i)
    U_j = np.linalg.matrix_power(dyn.U, j)
    V_i = np.linalg.matrix_power(dyn.V, i)
    V_j = np.linalg.matrix_power(dyn.V, j)
    return V_j @ sigma_inv @ V_i.T, U_i @ psi_inv @ U_j.T


def fisher_memory_matrix(dyn: LinearMatrixDynamics, k_max: int) -> np.ndarray:
    """Symmetric matrix J_ij = Tr(Σ⁻¹ M_iᵀ Ψ⁻¹ M_j); its diagonal is the memory curve."""
    psi, sigma = state_covariances(dyn)
    psi_factor = cholesky(psi, "Psi")
    sigma_factor = cholesky(sigma, "Sigma")
    Ms = np.stack(mean_derivatives(dyn, k_max))
    left = np.stack([scipy.linalg.cho_solve(sigma_factor, M.T) for M in Ms])
    right = np.stack([scipy.linalg.cho_solve(psi_factor, M) for M in Ms])
    J = np.einsum("iab,jba->ij", left, right)
    return 0.5 * (J + J.T)


def kl_history_check(dyn: LinearMatrixDynamics, s1: np.ndarray, s2: np.ndarray) -> Tuple[float, float]:
    """KL between the state laws under two signal histories, and ½ δsᵀ J δs.

    ``s[k]`` is the input ``k`` steps back.  The two numbers agree exactly for
    linear dynamics since only the mean depends on the signal.
    """
    s1 = np.asarray(s1, dtype=np.float64).reshape(-1)
    s2 = np.asarray(s2, dtype=np.float64).reshape(-1)
    if s1.shape != s2.shape or s1.size == 0:
        raise ShapeMismatch("histories must be non-empty and of equal length")
    psi, sigma = state_covariances(dyn)
    Ms = np.stack(mean_derivatives(dyn, s1.size - 1))
    p1 = MatrixGaussian(np.tensordot(s1, Ms, axes=1), psi, sigma)
    p2 = MatrixGaussian(np.tensordot(s2, Ms, axes=1), psi, sigma)
    delta = s2 - s1
    quad = 0.5 * float(delta @ fisher_memory_matrix(dyn, s1.size - 1) @ delta)
    return kl_divergence(p1, p2), quad


def vector_fmc(dyn: VectorDynamics, k_max: int) -> FmcSeries:
    """Memory curve of the vector baseline: J(i) = vᵀ W^{iT} (εC)⁻¹ W^i v."""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    rho = spectral_radius(dyn.W)
    if rho >= 1.0:
        raise NonConvergent(f"spectral radius {rho:.6g} >= 1")
    C = dyn.eps * solve_discrete_lyapunov(dyn.W.T, np.eye(dyn.v.size))
    factor = cholesky(C, "C")
    values = np.empty(k_max + 1)
    x = dyn.v.copy()
    for i in range(k_max + 1):
        values[i] = float(x @ scipy.linalg.cho_solve(factor, x))
        x = dyn.W @ x
    scale = float(dyn.v @ dyn.v) / float(np.min(np.linalg.eigvalsh(C)))
    next_bound = _power_majorant_at(k_max + 1, scale, dyn.W)
    return FmcSeries(values=values, truncation_error_bound=_truncation_bound(values[-1], rho ** 2, next_bound))


def simulate_dynamics(
    dyn: LinearMatrixDynamics,
    signal: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    noise_on: bool = True,
    activation: str = "linear",
) -> np.ndarray:
    """Forward-simulate X(n) = f(UᵀX(n−1)V + W s(n) + Z(n)) from X(0)=0.

    Returns an array of shape (len(signal), N, N).  ``activation`` is
    ``"linear"`` or ``"tanh"``.
    """
    if activation not in ("linear", "tanh"):
        raise ValueError(f"unknown activation: {activation}")
    if noise_on and rng is None:
        raise ValueError("noise_on requires an rng")
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    scale = np.sqrt(dyn.eps1 * dyn.eps2)
    X = np.zeros((dyn.N, dyn.N))
    out = np.empty((signal.size, dyn.N, dyn.N))
    for n, s in enumerate(signal):
        X = dyn.U.T @ X @ dyn.V + dyn.W * s
        if noise_on:
            X = X + scale * rng.standard_normal((dyn.N, dyn.N))
        if activation == "tanh":
            X = np.tanh(X)
        out[n] = X
    return out


def random_dynamics(
    n: int,
    radius: float,
    rng: np.random.Generator,
    normal: bool = True,
    unit_input: bool = True,
) -> LinearMatrixDynamics:
    """Random convergent system; W is rescaled so Tr(WᵀW)=1 when ``unit_input``."""
    make = random_normal_convergent if normal else random_convergent
    U = make(n, radius, rng)
    V = make(n, radius, rng)
    W = rng.standard_normal((n, n))
    if unit_input:
        W = W / np.linalg.norm(W)
    return LinearMatrixDynamics(as_matrix(U), as_matrix(V), W)


def spatiotemporal_capacity(dyn: LinearMatrixDynamics, tol: float = 1e-12) -> float:
    """Capacity summed from the row and column spatio-temporal factors."""
    psi, sigma = state_covariances(dyn)
    sigma_inv = spd_inverse(sigma, "Sigma")
    psi_inv = spd_inverse(psi, "Psi")
    state = {"Uk": np.eye(dyn.N), "Vk": np.eye(dyn.N)}

    def term(i: int) -> float:
        if i > 0:
            state["Uk"] = dyn.U @ state["Uk"]
            state["Vk"] = dyn.V @ state["Vk"]
        col = state["Vk"] @ sigma_inv @ state["Vk"].T
        row = state["Uk"] @ psi_inv @ state["Uk"].T
        return float(np.trace(dyn.W @ col @ dyn.W.T @ row))

    majorant = _PowerMajorant(_quadratic_scale(sigma, psi, dyn.W), dyn.U, dyn.V)
    total, _ = _sum_series(term, majorant, _decay_rate(dyn), tol, "spatio-temporal capacity")
    return total


def vector_capacity_report(dyn: VectorDynamics, tol: float = 1e-12) -> VectorCapacityReport:
    """Vector baseline capacity; at most N‖v‖²/eps, exactly ‖v‖²/eps for normal W."""
    rho = spectral_radius(dyn.W)
    if rho >= 1.0:
        raise NonConvergent(f"spectral radius {rho:.6g} >= 1")
    C = dyn.eps * solve_discrete_lyapunov(dyn.W.T, np.eye(dyn.v.size))
    factor = cholesky(C, "C")
    state = {"x": dyn.v.copy()}

    def term(i: int) -> float:
        if i > 0:
            state["x"] = dyn.W @ state["x"]
        return float(state["x"] @ scipy.linalg.cho_solve(factor, state["x"]))

    scale = float(dyn.v @ dyn.v) / float(np.min(np.linalg.eigvalsh(C)))
    J_tot, _ = _sum_series(term, _PowerMajorant(scale, dyn.W), rho ** 2, tol, "vector capacity")
    norm_sq = float(dyn.v @ dyn.v) / dyn.eps
    bound = dyn.v.size * norm_sq
    return VectorCapacityReport(
        J_tot=J_tot,
        input_fisher=norm_sq,
        bound=bound,
        normal=is_normal(dyn.W),
        satisfied=J_tot <= bound * (1.0 + 1e-9),
    )
