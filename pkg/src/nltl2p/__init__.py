"""Hyperspectral cube denoising and destriping.

Library layout:

* :mod:`nltl2p.tensor`     dense tensor kernels (unfold/fold, mode
  products, norms)
* :mod:`nltl2p.blockmatch` nonlocal grouping map R, its adjoint, weights
* :mod:`nltl2p.prox`       weighted-l1 and fiber-shrinkage proximal maps
* :mod:`nltl2p.hosvd`      Stiefel projection and slab-wise truncated HOSVD
* :mod:`nltl2p.solver`     the proximal block coordinate descent loop
* :mod:`nltl2p.noise`      seeded mixed-noise simulation
* :mod:`nltl2p.metrics`    MPSNR / MSSIM / global error index
* :mod:`nltl2p.fileio`     cube container, raw import, run configuration
* :mod:`nltl2p.cli`        the ``nltl2p`` command
"""

from .blockmatch import (
    BlockMatchingPlan,
    build_plan,
    extract,
    plan_from_json,
    plan_to_json,
    transpose_apply,
    weight_tensor,
)
from .errors import (
    ConfigurationError,
    DegeneracyWarning,
    DescentViolationError,
    IntegrityError,
    NumericalError,
    UsageError,
)
from .fileio import RunConfig, import_raw, load_run_config, read_hsi, write_hsi
from .hosvd import compose, init_hosvd, project_stiefel, reduced_svd
from .metrics import MetricReport, ergas, evaluate, mpsnr, mssim
from .noise import CaseResult, NoiseSpec, apply_case, apply_spec
from .prox import L2pThresholds, prox_l2p, prox_weighted_l1, solve_scalar_t
from .solver import (
    RunDiagnostics,
    RunResult,
    SolverConfig,
    SolverState,
    StationarityResiduals,
    objective,
    run,
    stationarity_residuals,
)
from .tensor import fold, frobenius, l1, l2p, l2p_pow, mode_product, unfold, weighted_l1

__version__ = "0.1.0"

__all__ = [
    "BlockMatchingPlan", "build_plan", "extract", "plan_from_json", "plan_to_json",
    "transpose_apply", "weight_tensor",
    "ConfigurationError", "DegeneracyWarning", "DescentViolationError",
    "IntegrityError", "NumericalError", "UsageError",
    "RunConfig", "import_raw", "load_run_config", "read_hsi", "write_hsi",
    "compose", "init_hosvd", "project_stiefel", "reduced_svd",
    "MetricReport", "ergas", "evaluate", "mpsnr", "mssim",
    "CaseResult", "NoiseSpec", "apply_case", "apply_spec",
    "L2pThresholds", "prox_l2p", "prox_weighted_l1", "solve_scalar_t",
    "RunDiagnostics", "RunResult", "SolverConfig", "SolverState",
    "StationarityResiduals", "objective", "run", "stationarity_residuals",
    "fold", "frobenius", "l1", "l2p", "l2p_pow", "mode_product", "unfold",
    "weighted_l1",
    "__version__",
]
