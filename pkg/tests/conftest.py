"""Shared test fixtures for matcap."""
import numpy as np
import pytest

from matcap.config import preset
from matcap.linalg import seeded_rng
from matcap.models import LinearMatrixDynamics


@pytest.fixture
def rng():
    """Fixed-seed generator."""
    return seeded_rng(1234)


@pytest.fixture
def scalar_dyn():
    """Scalar system u = v = 0.5, w = 1, unit noise."""
    return LinearMatrixDynamics.scalar(0.5, 0.5, 1.0)


@pytest.fixture
def diag_dyn():
    """U = diag(0.5, 0.3), V = diag(0.4, 0.2), W = I."""
    return LinearMatrixDynamics(np.diag([0.5, 0.3]), np.diag([0.4, 0.2]), np.eye(2))


@pytest.fixture
def zero_dyn():
    """Memoryless 2x2 system with a fixed input matrix."""
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    return LinearMatrixDynamics(np.zeros((2, 2)), np.zeros((2, 2)), W)


@pytest.fixture
def tiny_config():
    """Tiny MatNTM copy configuration used for smoke runs and gradient checks."""
    return preset("tiny")


def brute_lyapunov(A, Q, terms=500):
    """Direct partial sum of A^{kT} Q A^k."""
    X = np.zeros_like(Q, dtype=float)
    P = np.eye(A.shape[0])
    for _ in range(terms):
        X = X + P.T @ Q @ P
        P = P @ A
    return X
