"""matcap: memory capacity of matrix recurrent systems and the matrix NTM."""
from .models import (
    LinearMatrixDynamics,
    VectorDynamics,
    MemoryAugmentedDynamics,
    FmcSeries,
    MatrixGaussian,
    MemoryBank,
    TaskSample,
)
from .fmc import (
    fmc,
    capacity,
    capacity_bounds_report,
    dynamic_range_bound_check,
    expected_state_norm,
    spatiotemporal_fmm,
)
from .memory_fmc import mem_fmc, mem_covariances, memory_capacity_report
from .matntm import MatNtmModel, MatrixRnnModel, build_model
from .tasks import gen_copy_task, gen_assoc_recall
from .errors import MatcapError

__all__ = [
    "LinearMatrixDynamics",
    "VectorDynamics",
    "MemoryAugmentedDynamics",
    "FmcSeries",
    "MatrixGaussian",
    "MemoryBank",
    "TaskSample",
    "fmc",
    "capacity",
    "capacity_bounds_report",
    "dynamic_range_bound_check",
    "expected_state_norm",
    "spatiotemporal_fmm",
    "mem_fmc",
    "mem_covariances",
    "memory_capacity_report",
    "MatNtmModel",
    "MatrixRnnModel",
    "build_model",
    "gen_copy_task",
    "gen_assoc_recall",
    "MatcapError",
]
