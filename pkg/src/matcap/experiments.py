"""Bridge between command options and the analysis engine.

Each sweep builds one seeded generator per trial and runs trials on a
thread pool; rows always come back in trial order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Sequence, Tuple, TypeVar

import numpy as np

from .config import SweepConfig, thread_count
from .fmc import capacity_bounds_report, dynamic_range_bound_check, fmc, random_dynamics, vector_fmc
from .linalg import random_normal_convergent, spawn_rngs
from .memory_fmc import memory_capacity_report, mem_fmc
from .models import LinearMatrixDynamics, MemoryAugmentedDynamics, VectorDynamics

logger = logging.getLogger(__name__)

T = TypeVar("T")
Row = Dict[str, object]


def parallel_map(fn: Callable[[int, np.random.Generator], T], rngs: Sequence[np.random.Generator]) -> List[T]:
    """fn(trial, rng) for every trial, results in trial order."""
    if not rngs:
        return []
    workers = min(thread_count(), len(rngs))
    if workers == 1:
        return [fn(i, rng) for i, rng in enumerate(rngs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(rngs)), rngs))


def trial_dynamics(cfg: SweepConfig, rng: np.random.Generator, n: int | None = None) -> LinearMatrixDynamics:
    if cfg.preset == "scalar":
        return LinearMatrixDynamics.scalar(0.5, 0.5, 1.0)
    return random_dynamics(n or cfg.n, cfg.radius, rng, normal=cfg.normal)


def _curve_rows(trial: int, values: np.ndarray, cumulative: np.ndarray, key: str, index: str) -> List[Row]:
    return [
        {"trial": trial, index: i, key: float(v), "cumulative": float(c)}
        for i, (v, c) in enumerate(zip(values, cumulative))
    ]


def fmc_rows(cfg: SweepConfig) -> Tuple[List[Row], List[Row]]:
    """Matrix memory curves and vector baselines with N² neurons, per trial."""

    def run(trial: int, rng: np.random.Generator) -> Tuple[List[Row], List[Row]]:
        dyn = trial_dynamics(cfg, rng)
        series = fmc(dyn, cfg.kmax)
        if cfg.preset == "scalar":
            vec = VectorDynamics(np.array([[0.5]]), np.array([1.0]))
        else:
            size = dyn.N * dyn.N
            v = rng.standard_normal(size)
            vec = VectorDynamics(random_normal_convergent(size, cfg.radius, rng), v / np.linalg.norm(v))
        vseries = vector_fmc(vec, cfg.kmax)
        logger.info("trial %d: matrix J_tot=%.6g vector J_tot=%.6g", trial, series.capacity, vseries.capacity)
        return (
            _curve_rows(trial, series.values, series.cumulative, "J_i", "i"),
            _curve_rows(trial, vseries.values, vseries.cumulative, "J_i", "i"),
        )

    results = parallel_map(run, spawn_rngs(cfg.seed, cfg.trials))
    return [r for m, _ in results for r in m], [r for _, v in results for r in v]


def capacity_sweep_rows(cfg: SweepConfig, n_list: Sequence[int]) -> List[Row]:
    rows: List[Row] = []
    for n in n_list:
        def run(trial: int, rng: np.random.Generator, n: int = n) -> Row:
            report = capacity_bounds_report(trial_dynamics(cfg, rng, n))
            if cfg.normal:
                bound, satisfied = 1.0, bool(report.normal_bound_satisfied)
            else:
                bound, satisfied = float(n * n), report.general_bound_satisfied
            return {
                "N": n,
                "trial": trial,
                "J_tot": report.J_tot,
                "J_tot_rel": report.J_tot_rel,
                "bound": bound,
                "satisfied": satisfied,
            }

        rows.extend(parallel_map(run, spawn_rngs(cfg.seed + n, cfg.trials)))
    return rows


def mem_fmc_rows(cfg: SweepConfig) -> List[Row]:
    def run(trial: int, rng: np.random.Generator) -> List[Row]:
        base = trial_dynamics(cfg, rng)
        report = memory_capacity_report(base, cfg.m_max, cfg.kmax)
        series = mem_fmc(MemoryAugmentedDynamics(base, m_max=cfg.m_max, k_max=cfg.kmax))
        return [
            {
                "trial": trial,
                "k": k,
                "J_prime_k": float(v),
                "cumulative": float(c),
                "J_tot_base": report.J_tot,
                "ratio": report.ratio,
            }
            for k, (v, c) in enumerate(zip(series.values, series.cumulative))
        ]

    return [row for rows in parallel_map(run, spawn_rngs(cfg.seed, cfg.trials)) for row in rows]


def bounds_rows(cfg: SweepConfig) -> List[Row]:
    def run(trial: int, rng: np.random.Generator) -> Row:
        dyn = trial_dynamics(cfg, rng)
        report = capacity_bounds_report(dyn)
        dyn_range = dynamic_range_bound_check(dyn)
        normal_ok = report.normal_bound_satisfied
        return {
            "trial": trial,
            "J_tot": report.J_tot,
            "input_fisher": report.input_fisher,
            "J_tot_rel": report.J_tot_rel,
            "normal": report.normal,
            "normal_bound": "na" if normal_ok is None else normal_ok,
            "general_bound": report.general_bound_satisfied,
            "dyn_range_lhs": dyn_range.lhs,
            "dyn_range_rhs": dyn_range.rhs,
        }

    return parallel_map(run, spawn_rngs(cfg.seed, cfg.trials))
