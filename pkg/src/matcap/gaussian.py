"""Matrix-variate Gaussian utilities."""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import ShapeMismatch
from .linalg import as_matrix, cholesky, logdet_spd, spd_inverse
from .models import MatrixGaussian


def kl_divergence(p1: MatrixGaussian, p2: MatrixGaussian) -> float:
    """KL(p1 ‖ p2) for two matrix normals of the same shape."""
    if p1.shape != p2.shape:
        raise ShapeMismatch(f"shapes differ: {p1.shape} vs {p2.shape}")
    n, p = p1.shape
    psi2_inv = spd_inverse(p2.row_cov, "row_cov")
    sigma2_inv = spd_inverse(p2.col_cov, "col_cov")
    diff = p2.mean - p1.mean
    log_ratio = (
        n * (logdet_spd(p2.col_cov) - logdet_spd(p1.col_cov))
        + p * (logdet_spd(p2.row_cov) - logdet_spd(p1.row_cov))
    )
    trace_term = np.trace(psi2_inv @ p1.row_cov) * np.trace(sigma2_inv @ p1.col_cov)
    mahalanobis = np.trace(sigma2_inv @ diff.T @ psi2_inv @ diff)
    return float(0.5 * (log_ratio - n * p + trace_term + mahalanobis))


def sample(dist: MatrixGaussian, rng: np.random.Generator) -> np.ndarray:
    """Draw M + L_row G L_colᵀ with G standard normal."""
    l_row = np.tril(cholesky(dist.row_cov, "row_cov")[0])
    l_col = np.tril(cholesky(dist.col_cov, "col_cov")[0])
    gauss = rng.standard_normal(dist.shape)
    return dist.mean + l_row @ gauss @ l_col.T


def log_density(dist: MatrixGaussian, X: np.ndarray) -> float:
    X = as_matrix(X, "X")
    if X.shape != dist.shape:
        raise ShapeMismatch(f"X must be {dist.shape}, got {X.shape}")
    n, p = dist.shape
    centered = X - dist.mean
    row_factor = cholesky(dist.row_cov, "row_cov")
    col_factor = cholesky(dist.col_cov, "col_cov")
    quad = np.trace(
        scipy.linalg.cho_solve(col_factor, centered.T) @ scipy.linalg.cho_solve(row_factor, centered)
    )
    return float(
        -0.5 * n * p * math.log(2.0 * math.pi)
        - 0.5 * n * logdet_spd(dist.col_cov)
        - 0.5 * p * logdet_spd(dist.row_cov)
        - 0.5 * quad
    )


def entropy(dist: MatrixGaussian) -> float:
    n, p = dist.shape
    return float(
        0.5 * n * p * (1.0 + math.log(2.0 * math.pi))
        + 0.5 * n * logdet_spd(dist.col_cov)
        + 0.5 * p * logdet_spd(dist.row_cov)
    )


def input_fisher_information(W: np.ndarray, eps1: float, eps2: float) -> float:
    """Fisher information a single input carries through W under white noise."""
    W = as_matrix(W, "W")
    if eps1 <= 0 or eps2 <= 0:
        raise ValueError("noise scales must be positive")
    return float(np.sum(W * W) / (eps1 * eps2))
