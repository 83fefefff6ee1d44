"""Dense linear algebra kernels: Lyapunov/Sylvester series, spectra, sampling."""
from __future__ import annotations

import logging
from typing import Tuple

import numpy as np
import scipy.linalg

from .errors import NonConvergent, NotNormal, ShapeMismatch, SingularCovariance

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"
NORMAL_REL_TOL = 1e-10


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic generator used everywhere randomness is needed."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent per-trial generators derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def as_matrix(value: object, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _require_square(arr: np.ndarray, name: str) -> int:
    if arr.shape[0] != arr.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {arr.shape}")
    return arr.shape[0]


def spectral_radius(A: np.ndarray) -> float:
    """Largest eigenvalue modulus."""
    A = as_matrix(A, "A")
    _require_square(A, "A")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def frobenius_inner(A: np.ndarray, B: np.ndarray) -> float:
    """Tr(AᵀB)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeMismatch(f"shapes differ: {A.shape} vs {B.shape}")
    return float(np.vdot(A, B))


def is_normal(A: np.ndarray, rel_tol: float = NORMAL_REL_TOL) -> bool:
    """True when ‖AAᵀ − AᵀA‖_max ≤ rel_tol·max(1, ‖A‖²_F)."""
    A = as_matrix(A, "A")
    _require_square(A, "A")
    commutator = A @ A.T - A.T @ A
    scale = max(1.0, float(np.sum(A * A)))
    return float(np.max(np.abs(commutator), initial=0.0)) <= rel_tol * scale


def _residual_ok(residual: np.ndarray, X: np.ndarray, tol: float) -> bool:
    scale = max(1.0, float(np.max(np.abs(X), initial=0.0)))
    return float(np.max(np.abs(residual), initial=0.0)) <= tol * scale


def solve_discrete_lyapunov(
    A: np.ndarray, Q: np.ndarray, tol: float = 1e-12, iter_max: int = 64
) -> np.ndarray:
    """Solve X = AᵀXA + Q, i.e. X = Σ_k A^{kT} Q A^k, by repeated squaring.

    Each doubling step adds the next 2^j terms of the series.  The max-abs
    residual must fall below ``tol·max(1, ‖X‖_max)``: an absolute bound while
    ‖X‖_max ≤ 1, relative above that where round-off alone exceeds ``tol``.
    """
    A = as_matrix(A, "A")
    Q = as_matrix(Q, "Q")
    n = _require_square(A, "A")
    if Q.shape != (n, n):
        raise ShapeMismatch(f"Q must be {n}x{n}, got {Q.shape}")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise NonConvergent(f"spectral radius {rho:.6g} >= 1, Lyapunov series diverges")

    X = Q.copy()
    power = A.copy()
    for iteration in range(iter_max):
        X = X + power.T @ X @ power
        power = power @ power
        residual = A.T @ X @ A + Q - X
        if _residual_ok(residual, X, tol):
            logger.debug("lyapunov converged after %d doublings (rho=%.4g)", iteration + 1, rho)
            if np.allclose(Q, Q.T):
                X = 0.5 * (X + X.T)
            return X
    raise NonConvergent(f"Lyapunov doubling did not reach tol={tol:g} in {iter_max} iterations")


def solve_discrete_sylvester_sum(
    U: np.ndarray, V: np.ndarray, A: np.ndarray, tol: float = 1e-12, iter_max: int = 64
) -> np.ndarray:
    """Return X = Σ_k U^{kT} A V^k, the fixed point of X = UᵀXV + A."""
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    A = as_matrix(A, "A")
    n = _require_square(U, "U")
    p = _require_square(V, "V")
    if A.shape != (n, p):
        raise ShapeMismatch(f"A must be {n}x{p}, got {A.shape}")
    product = spectral_radius(U) * spectral_radius(V)
    if product >= 1.0:
        raise NonConvergent(f"rho(U)*rho(V) = {product:.6g} >= 1, Sylvester series diverges")

    X = A.copy()
    left = U.copy()
    right = V.copy()
    for _ in range(iter_max):
        X = X + left.T @ X @ right
        left = left @ left
        right = right @ right
        if _residual_ok(U.T @ X @ V + A - X, X, tol):
            return X
    raise NonConvergent(f"Sylvester doubling did not reach tol={tol:g} in {iter_max} iterations")


def eig_normal(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition A = E diag(λ) Eᴴ with unitary E for normal A.

    The complex Schur factor of a normal matrix is diagonal, which gives an
    orthonormal eigenbasis even for repeated eigenvalues.
    """
    A = as_matrix(A, "A")
    _require_square(A, "A")
    if not is_normal(A):
        raise NotNormal("matrix is not normal within tolerance")
    T, Z = scipy.linalg.schur(A.astype(np.complex128), output="complex")
    return np.diag(T).copy(), Z


def random_normal_convergent(
    n: int, radius_max: float, rng: np.random.Generator
) -> np.ndarray:
    """Random real normal matrix with every eigenvalue modulus in (0, radius_max).

    Built as Q D Qᵀ with Haar-orthogonal Q and D block diagonal: 1x1 blocks ±r
    and 2x2 blocks r·rotation(θ), giving complex-conjugate pairs.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0.0 < radius_max < 1.0:
        raise ValueError(f"radius_max must lie in (0, 1), got {radius_max}")
    gauss = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(gauss)
    Q = Q * np.sign(np.where(np.diag(R) == 0.0, 1.0, np.diag(R)))
    D = np.zeros((n, n))
    i = 0
    while i < n:
        r = radius_max * (1.0 - rng.random())
        if r >= radius_max:
            r = np.nextafter(radius_max, 0.0)
        if n - i >= 2 and rng.random() < 0.5:
            theta = rng.uniform(0.0, np.pi)
            c, s = np.cos(theta), np.sin(theta)
            D[i : i + 2, i : i + 2] = r * np.array([[c, -s], [s, c]])
            i += 2
        else:
            D[i, i] = r if rng.random() < 0.5 else -r
            i += 1
    return Q @ D @ Q.T


def random_convergent(n: int, radius_max: float, rng: np.random.Generator) -> np.ndarray:
    """Random Gaussian matrix rescaled to a spectral radius drawn in (0, radius_max)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0.0 < radius_max < 1.0:
        raise ValueError(f"radius_max must lie in (0, 1), got {radius_max}")
    gauss = rng.standard_normal((n, n))
    rho = spectral_radius(gauss)
    target = radius_max * (1.0 - rng.random())
    if rho == 0.0:
        return gauss
    return gauss * (min(target, np.nextafter(radius_max, 0.0)) / rho)


def cholesky(S: np.ndarray, name: str = "covariance") -> Tuple[np.ndarray, bool]:
    """Cholesky factor for ``scipy.linalg.cho_solve``; raises SingularCovariance."""
    S = as_matrix(S, name)
    _require_square(S, name)
    if not np.allclose(S, S.T, rtol=1e-9, atol=1e-12):
        raise SingularCovariance(f"{name} is not symmetric")
    try:
        return scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"{name} is not positive definite") from exc


def spd_inverse(S: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Inverse of a symmetric positive definite matrix."""
    factor = cholesky(S, name)
    inv = scipy.linalg.cho_solve(factor, np.eye(S.shape[0]))
    return 0.5 * (inv + inv.T)


def logdet_spd(S: np.ndarray, name: str = "covariance") -> float:
    """log|S| for symmetric positive definite S."""
    c, _ = cholesky(S, name)
    return 2.0 * float(np.sum(np.log(np.diag(c))))
