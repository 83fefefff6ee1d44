"""Tests for the memory-augmented memory curve."""
import itertools

import numpy as np
import pytest

from matcap.errors import ShapeMismatch, SimulationOverflow, SingularCovariance
from matcap.fmc import fmc, random_dynamics, state_covariances
from matcap.linalg import seeded_rng, spawn_rngs
from matcap.memory_fmc import (
    memory_capacity_report,
    mem_covariances,
    mem_fmc,
    mem_fmc_decomposed,
    mem_mean_derivative,
    memory_fraction,
    simulate_mem_dynamics,
)
from matcap.models import LinearMatrixDynamics, MemoryAugmentedDynamics


def _summed_powers(A, depth):
    return [np.linalg.matrix_power(A, s) for s in range(depth)]


def _nested_cov(A, m_max, depth=16):
    """(F(I), Σ_{m=1}^{m_max} F^{m+1}(I)) by enumerating every index tuple; powers commute."""
    powers = _summed_powers(A, depth * (m_max + 1))
    state = sum(P.T @ P for P in powers[:depth])
    mem = np.zeros_like(A)
    for m in range(1, m_max + 1):
        for ks in itertools.product(range(depth), repeat=m + 1):
            P = powers[sum(ks)]
            mem = mem + P.T @ P
    return state, mem


def _nested_mean_derivative(U, V, W, k, m_max, depth=16):
    """Σ_m Σ_{j_1..j_m} U^{(k+Σj)T} W V^{k+Σj}."""
    top = k + depth * max(m_max, 1)
    pu, pv = _summed_powers(U, top), _summed_powers(V, top)
    total = np.zeros_like(W)
    for m in range(m_max + 1):
        for js in itertools.product(range(depth), repeat=m):
            s = k + sum(js)
            total = total + pu[s].T @ W @ pv[s]
    return total


def _contraction(n, norm, rng):
    A = rng.standard_normal((n, n))
    return norm * A / np.linalg.norm(A, 2)


# --- mem_covariances ---

class TestMemCovariances:
    def test_scalar_one_level(self, scalar_dyn):
        covs = mem_covariances(MemoryAugmentedDynamics(scalar_dyn, m_max=1))
        assert covs.psi_state[0, 0] == pytest.approx(4.0 / 3.0)
        assert covs.psi_mem[0, 0] == pytest.approx(16.0 / 9.0)

    def test_zero_connection(self):
        base = LinearMatrixDynamics(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), eps1=2.0)
        covs = mem_covariances(MemoryAugmentedDynamics(base, m_max=3))
        assert np.allclose(covs.psi_state, 2.0 * np.eye(2))
        assert np.allclose(covs.psi_mem, 6.0 * np.eye(2))

    def test_grows_with_depth(self, diag_dyn):
        previous = None
        for m_max in range(4):
            psi_mem = mem_covariances(MemoryAugmentedDynamics(diag_dyn, m_max=m_max)).psi_mem
            if previous is not None:
                assert np.all(np.linalg.eigvalsh(psi_mem - previous) >= -1e-12)
            previous = psi_mem

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("m_max", [1, 2, 3])
    def test_matches_nested_sums(self, n, m_max):
        rng = seeded_rng(100 * n + m_max)
        U, V = _contraction(n, 0.35, rng), _contraction(n, 0.3, rng)
        base = LinearMatrixDynamics(U, V, rng.standard_normal((n, n)), eps1=0.7, eps2=1.3)
        covs = mem_covariances(MemoryAugmentedDynamics(base, m_max=m_max))
        psi_state, psi_mem = _nested_cov(U, m_max)
        sigma_state, sigma_mem = _nested_cov(V, m_max)
        assert np.max(np.abs(covs.psi_state - 0.7 * psi_state)) <= 1e-9
        assert np.max(np.abs(covs.psi_mem - 0.7 * psi_mem)) <= 1e-9
        assert np.max(np.abs(covs.sigma_state - 1.3 * sigma_state)) <= 1e-9
        assert np.max(np.abs(covs.sigma_mem - 1.3 * sigma_mem)) <= 1e-9

    def test_state_block_is_base(self, diag_dyn):
        psi, sigma = state_covariances(diag_dyn)
        covs = mem_covariances(MemoryAugmentedDynamics(diag_dyn, m_max=2))
        assert np.allclose(covs.psi_state, psi)
        assert np.allclose(covs.sigma_state, sigma)


# --- mem_mean_derivative ---

class TestMeanDerivative:
    def test_no_memory(self, diag_dyn):
        dM = mem_mean_derivative(MemoryAugmentedDynamics(diag_dyn, m_max=0), 2)
        expected = np.linalg.matrix_power(diag_dyn.U.T, 2) @ diag_dyn.W @ np.linalg.matrix_power(diag_dyn.V, 2)
        assert np.array_equal(dM, expected)

    def test_scalar(self, scalar_dyn):
        dM = mem_mean_derivative(MemoryAugmentedDynamics(scalar_dyn, m_max=1), 0)
        assert dM[0, 0] == pytest.approx(7.0 / 3.0)

    def test_matches_nested_sums(self):
        rng = seeded_rng(73)
        U, V, W = _contraction(3, 0.35, rng), _contraction(3, 0.3, rng), rng.standard_normal((3, 3))
        dyn = MemoryAugmentedDynamics(LinearMatrixDynamics(U, V, W), m_max=3)
        for k in range(3):
            expected = _nested_mean_derivative(U, V, W, k, 3)
            assert np.max(np.abs(mem_mean_derivative(dyn, k) - expected)) <= 1e-9

    def test_linear_in_w(self, diag_dyn):
        doubled = LinearMatrixDynamics(diag_dyn.U, diag_dyn.V, 2.0 * diag_dyn.W)
        a = mem_mean_derivative(MemoryAugmentedDynamics(diag_dyn, m_max=2), 1)
        b = mem_mean_derivative(MemoryAugmentedDynamics(doubled, m_max=2), 1)
        assert np.allclose(b, 2.0 * a)


# --- mem_fmc ---

class TestMemFmc:
    def test_no_memory_reduces(self, diag_dyn):
        plain = fmc(diag_dyn, 15).values
        augmented = mem_fmc(MemoryAugmentedDynamics(diag_dyn, m_max=0, k_max=15)).values
        assert np.max(np.abs(plain - augmented)) <= 1e-12

    def test_scalar_first_value(self, scalar_dyn):
        series = mem_fmc(MemoryAugmentedDynamics(scalar_dyn, m_max=1, k_max=10))
        assert series.values[0] == pytest.approx((49.0 / 9.0) / (28.0 / 9.0) ** 2, abs=1e-12)
        assert series.values[0] == pytest.approx(0.5625, abs=1e-12)

    def test_lag_derivatives_match(self, diag_dyn):
        dyn = MemoryAugmentedDynamics(diag_dyn, m_max=2, k_max=6)
        covs = mem_covariances(dyn)
        psi_inv = np.linalg.inv(covs.psi_total)
        sigma_inv = np.linalg.inv(covs.sigma_total)
        values = mem_fmc(dyn).values
        for k in range(7):
            dM = mem_mean_derivative(dyn, k)
            assert values[k] == pytest.approx(np.trace(sigma_inv @ dM.T @ psi_inv @ dM), rel=1e-9)

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("m_max", [1, 2])
    def test_matches_nested_sums(self, n, m_max):
        rng = seeded_rng(200 * n + m_max)
        U, V, W = _contraction(n, 0.35, rng), _contraction(n, 0.3, rng), rng.standard_normal((n, n))
        dyn = MemoryAugmentedDynamics(LinearMatrixDynamics(U, V, W), m_max=m_max, k_max=3)
        psi_state, psi_mem = _nested_cov(U, m_max)
        sigma_state, sigma_mem = _nested_cov(V, m_max)
        psi_inv = np.linalg.inv(psi_state + psi_mem)
        sigma_inv = np.linalg.inv(sigma_state + sigma_mem)
        values = mem_fmc(dyn).values
        for k in range(4):
            dM = _nested_mean_derivative(U, V, W, k, m_max)
            assert values[k] == pytest.approx(np.trace(sigma_inv @ dM.T @ psi_inv @ dM), rel=1e-9)

    def test_p_above_one_rejected(self, scalar_dyn):
        with pytest.raises(ShapeMismatch):
            mem_fmc(MemoryAugmentedDynamics(scalar_dyn, p=2, alpha=(0.5, 0.5)))


# --- mem_fmc_decomposed ---

class TestDecomposed:
    def test_scalar_parity(self, scalar_dyn):
        dyn = MemoryAugmentedDynamics(scalar_dyn, m_max=1, k_max=5)
        values = mem_fmc(dyn).values
        for k in range(6):
            assert mem_fmc_decomposed(dyn, k) == pytest.approx(values[k], abs=1e-10)

    def test_random_parity(self):
        for trial, rng in enumerate(spawn_rngs(70, 50)):
            base = random_dynamics(2 + trial % 9, 0.9, rng)
            dyn = MemoryAugmentedDynamics(base, m_max=1 + trial % 3, k_max=10)
            values = mem_fmc(dyn).values
            for k in range(11):
                assert abs(mem_fmc_decomposed(dyn, k) - values[k]) <= 1e-8 * max(1.0, values[k])

    def test_requires_memory(self, scalar_dyn):
        with pytest.raises(SingularCovariance):
            mem_fmc_decomposed(MemoryAugmentedDynamics(scalar_dyn, m_max=0), 0)

    def test_equal_blocks_give_half(self):
        S = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert np.allclose(memory_fraction(S, S), 0.5 * np.eye(2))


# --- memory_capacity_report ---

class TestMemoryCapacityReport:
    def test_no_memory_ratio_one(self, diag_dyn):
        assert memory_capacity_report(diag_dyn, 0, 100).ratio == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_scalar_ratio_one(self, scalar_dyn):
        report = memory_capacity_report(scalar_dyn, 3, 200)
        assert report.ratio == pytest.approx(1.0, abs=1e-9)
        assert not report.bound_exceeded
        assert report.worst_case_bound == pytest.approx(4.0 * report.J_tot)

    def test_normal_bases_do_not_exceed_plain(self):
        for rng in spawn_rngs(71, 15):
            report = memory_capacity_report(random_dynamics(int(rng.integers(2, 7)), 0.9, rng), 3, 200)
            assert report.ratio <= 1.0 + 1e-9

    def test_ratio_finite_for_each_depth(self, diag_dyn):
        ratios = [memory_capacity_report(diag_dyn, m, 100).ratio for m in range(4)]
        assert all(np.isfinite(ratios))
        assert ratios[0] == pytest.approx(1.0)


# --- simulate_mem_dynamics ---

class TestSimulateMem:
    def test_zero_everything(self, diag_dyn):
        traj = simulate_mem_dynamics(diag_dyn, 1, [1.0], [0.0] * 5, 5, noise_on=False)
        assert all(np.array_equal(X, np.zeros((2, 2))) for X in traj)

    def test_queue_echo(self):
        base = LinearMatrixDynamics.scalar(0.0, 0.0, 1.0)
        traj = simulate_mem_dynamics(base, 1, [1.0], [1.0, 0.0, 0.0], 3, noise_on=False)
        assert [float(X[0, 0]) for X in traj] == [1.0, 0.0, 1.0]

    def test_held_signal_mean_matches_series(self):
        # a unit signal held for 2(m_max+1) steps reaches every echo count up to m_max;
        # the lags cut off by the horizon are O(‖U‖²‖V‖²)
        U = np.array([[0.04, 0.025], [-0.015, 0.03]])
        V = np.array([[0.05, 0.0], [0.01, 0.025]])
        base = LinearMatrixDynamics(U, V, np.array([[1.0, 0.5], [-0.4, 1.0]]))
        dyn = MemoryAugmentedDynamics(base, m_max=3)
        expected = sum(mem_mean_derivative(dyn, k) for k in range(8))
        noiseless = simulate_mem_dynamics(base, 1, [1.0], [1.0] * 8, 8, noise_on=False)[-1]
        assert np.max(np.abs(noiseless - expected)) <= 1e-3
        rng = seeded_rng(72)
        draws = np.stack([simulate_mem_dynamics(base, 1, [1.0], [1.0] * 8, 8, rng)[-1] for _ in range(10_000)])
        stderr = draws.std(axis=0) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - expected) <= 3 * stderr + 1e-3)

    def test_without_lag_echoes_add_up(self):
        base = LinearMatrixDynamics(np.zeros((2, 2)), np.zeros((2, 2)), np.array([[1.0, 2.0], [0.0, -1.0]]))
        for m_max in range(4):
            dyn = MemoryAugmentedDynamics(base, m_max=m_max)
            steps = 2 * (m_max + 1)
            final = simulate_mem_dynamics(base, 1, [1.0], [1.0] * steps, steps, noise_on=False)[-1]
            assert np.allclose(final, mem_mean_derivative(dyn, 0))
            assert np.array_equal(mem_mean_derivative(dyn, 1), np.zeros((2, 2)))

    def test_alpha_must_sum_to_one(self, scalar_dyn):
        with pytest.raises(ValueError):
            simulate_mem_dynamics(scalar_dyn, 2, [0.5, 0.6], [1.0], 3, noise_on=False)

    def test_alpha_length(self, scalar_dyn):
        with pytest.raises(ShapeMismatch):
            simulate_mem_dynamics(scalar_dyn, 2, [1.0], [1.0], 3, noise_on=False)

    def test_overflow_flagged(self):
        base = LinearMatrixDynamics.scalar(0.9, 0.9, 1.0)
        with pytest.raises(SimulationOverflow) as info:
            simulate_mem_dynamics(base, 1, [1.0], [1e6] * 400, 400, noise_on=False)
        assert info.value.step > 0
