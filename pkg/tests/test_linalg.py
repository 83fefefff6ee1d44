"""Tests for the linear algebra kernels."""
import numpy as np
import pytest

from matcap.errors import NonConvergent, NotNormal, ShapeMismatch, SingularCovariance
from matcap.linalg import (
    cholesky,
    eig_normal,
    frobenius_inner,
    is_normal,
    logdet_spd,
    random_convergent,
    random_normal_convergent,
    seeded_rng,
    solve_discrete_lyapunov,
    solve_discrete_sylvester_sum,
    spawn_rngs,
    spd_inverse,
    spectral_radius,
)
from tests.conftest import brute_lyapunov


# --- solve_discrete_lyapunov ---

class TestLyapunov:
    def test_zero_recurrence(self):
        assert solve_discrete_lyapunov(np.array([[0.0]]), np.array([[1.0]]))[0, 0] == pytest.approx(1.0)

    def test_scalar(self):
        X = solve_discrete_lyapunov(np.array([[0.5]]), np.array([[1.0]]))
        assert X[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-12)

    def test_diagonal(self):
        X = solve_discrete_lyapunov(np.diag([0.5, 0.3]), np.eye(2))
        assert np.allclose(X, np.diag([4.0 / 3.0, 100.0 / 91.0]), atol=1e-12)

    def test_matches_direct_series(self):
        rng = seeded_rng(5)
        for _ in range(5):
            A = random_convergent(5, 0.9, rng)
            Q = rng.standard_normal((5, 5))
            Q = Q @ Q.T
            X = solve_discrete_lyapunov(A, Q)
            assert np.max(np.abs(X - brute_lyapunov(A, Q, terms=800))) <= 1e-9

    def test_symmetric_result(self):
        rng = seeded_rng(6)
        A = random_convergent(4, 0.8, rng)
        X = solve_discrete_lyapunov(A, np.eye(4))
        assert np.array_equal(X, X.T)

    def test_absolute_residual_for_small_solution(self):
        rng = seeded_rng(8)
        A = random_normal_convergent(4, 0.7, rng)
        Q = 0.05 * np.eye(4)
        X = solve_discrete_lyapunov(A, Q)
        assert np.max(np.abs(X)) <= 1.0
        assert np.max(np.abs(A.T @ X @ A + Q - X)) <= 1e-12

    def test_unstable_raises(self):
        with pytest.raises(NonConvergent):
            solve_discrete_lyapunov(np.array([[1.0]]), np.array([[1.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            solve_discrete_lyapunov(np.eye(2) * 0.5, np.eye(3))


# --- solve_discrete_sylvester_sum ---

class TestSylvesterSum:
    def test_zero_u(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        X = solve_discrete_sylvester_sum(np.zeros((2, 2)), np.eye(2) * 0.7, A)
        assert np.allclose(X, A)

    def test_scalar(self):
        X = solve_discrete_sylvester_sum(np.array([[0.5]]), np.array([[0.5]]), np.array([[1.0]]))
        assert X[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-12)

    def test_diagonal(self):
        D = np.diag([0.5, 0.3])
        X = solve_discrete_sylvester_sum(D, D, np.eye(2))
        assert np.allclose(X, np.diag([4.0 / 3.0, 100.0 / 91.0]), atol=1e-12)

    def test_linear_in_a(self):
        rng = seeded_rng(8)
        U = random_convergent(3, 0.9, rng)
        V = random_convergent(3, 0.9, rng)
        A, B = rng.standard_normal((2, 3, 3))
        lhs = solve_discrete_sylvester_sum(U, V, 2.0 * A - 3.0 * B)
        rhs = 2.0 * solve_discrete_sylvester_sum(U, V, A) - 3.0 * solve_discrete_sylvester_sum(U, V, B)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_divergent_product_raises(self):
        with pytest.raises(NonConvergent):
            solve_discrete_sylvester_sum(np.eye(1), np.eye(1), np.eye(1))


# --- eig_normal ---

class TestEigNormal:
    def test_identity(self):
        lam, _ = eig_normal(np.eye(2))
        assert np.allclose(np.sort(lam.real), [1.0, 1.0])

    def test_diagonal(self):
        lam, _ = eig_normal(np.diag([0.4, 0.2]))
        assert np.allclose(np.sort(lam.real), [0.2, 0.4])

    def test_rotation(self):
        c = s = np.sqrt(0.5)
        lam, _ = eig_normal(np.array([[c, -s], [s, c]]))
        assert np.allclose(np.abs(lam), 1.0)
        assert np.allclose(np.sort(np.angle(lam)), [-np.pi / 4, np.pi / 4])

    def test_reconstruction(self):
        for trial, rng in enumerate(spawn_rngs(9, 100)):
            n = 1 + trial % 15
            A = random_normal_convergent(n, 0.95, rng)
            lam, E = eig_normal(A)
            assert np.max(np.abs(E @ np.diag(lam) @ E.conj().T - A)) <= 1e-8
            assert np.max(np.abs(E.conj().T @ E - np.eye(n))) <= 1e-8

    def test_non_normal_raises(self):
        with pytest.raises(NotNormal):
            eig_normal(np.array([[0.1, 1.0], [0.0, 0.2]]))


# --- random_normal_convergent / random_convergent ---

class TestRandomMatrices:
    def test_scalar_bound(self):
        A = random_normal_convergent(1, 0.9, seeded_rng(7))
        assert abs(A[0, 0]) <= 0.9

    def test_normal_and_convergent(self):
        rng = seeded_rng(10)
        for n in range(1, 12):
            A = random_normal_convergent(n, 0.95, rng)
            assert np.max(np.abs(A @ A.T - A.T @ A)) <= 1e-10
            assert spectral_radius(A) <= 0.95 + 1e-6

    def test_deterministic(self):
        a = random_normal_convergent(4, 0.9, seeded_rng(3))
        b = random_normal_convergent(4, 0.9, seeded_rng(3))
        assert np.array_equal(a, b)

    def test_general_radius(self):
        rng = seeded_rng(11)
        A = random_convergent(6, 0.9, rng)
        assert spectral_radius(A) < 0.9

    @pytest.mark.parametrize("radius", [0.0, 1.0, 1.5])
    def test_bad_radius(self, radius):
        with pytest.raises(ValueError):
            random_normal_convergent(3, radius, seeded_rng(0))
        with pytest.raises(ValueError):
            random_convergent(3, radius, seeded_rng(0))


# --- small helpers ---

class TestHelpers:
    def test_frobenius_identity(self):
        assert frobenius_inner(np.eye(2), np.eye(2)) == 2.0

    def test_frobenius_zero(self):
        assert frobenius_inner(np.ones((2, 2)), np.zeros((2, 2))) == 0.0

    def test_frobenius_self(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert frobenius_inner(A, A) == 30.0

    def test_frobenius_shape(self):
        with pytest.raises(ShapeMismatch):
            frobenius_inner(np.eye(2), np.eye(3))

    def test_is_normal(self):
        assert is_normal(np.eye(3))
        assert not is_normal(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_spectral_radius_uses_eigenvalues(self):
        # nilpotent: large norm, zero spectrum
        assert spectral_radius(np.array([[0.0, 100.0], [0.0, 0.0]])) == pytest.approx(0.0, abs=1e-12)

    def test_cholesky_rejects_indefinite(self):
        with pytest.raises(SingularCovariance):
            cholesky(np.diag([1.0, -1.0]))

    def test_spd_inverse_and_logdet(self):
        S = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert np.allclose(spd_inverse(S) @ S, np.eye(2))
        assert logdet_spd(S) == pytest.approx(np.log(np.linalg.det(S)))

    def test_spawned_streams_differ(self):
        a, b = spawn_rngs(0, 2)
        assert a.random() != b.random()

    def test_spawned_streams_repeat(self):
        first = [g.random() for g in spawn_rngs(4, 3)]
        second = [g.random() for g in spawn_rngs(4, 3)]
        assert first == second
