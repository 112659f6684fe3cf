"""Kernel-based nonlinear meta-learning.

Learn a low-dimensional subspace of an RKHS shared by many regression tasks
from per-task split ridge estimates, then solve new tasks by ordinary ridge
regression on subspace coordinates. Ships a synthetic-world oracle in which
subspace error, operator perturbation, and excess risk are exactly
computable, plus a seeded experiment harness and rate calculator.
"""

from .harness import (
    ExperimentConfig,
    RateReport,
    SlopeFit,
    default_experiment_config,
    fit_slope,
    run_experiment,
    sin_theta_lambda_sweep,
)
from .inference import (
    LambdaStar,
    SubspaceRidge,
    TargetModel,
    default_lambda_star,
    embed,
    fit_target,
    predict_target,
)
from .kernels import Gaussian, Kernel, Laplacian, Matern, Polynomial, kernel_from_dict
from .linalg import (
    NumericsError,
    SpectralDecomposition,
    psqrt_and_pinvsqrt,
    spd_solve,
    svd,
    sym_eig,
)
from .rates import (
    GainRow,
    RegimeResult,
    RegularityParams,
    classify_regime,
    gain_conditions,
    krr_optimal_lambda,
)
from .regression import (
    SplitTaskFit,
    TaskRegressor,
    fit_krr,
    fit_split,
    predict,
    rkhs_inner,
)
from .subspace import (
    RichnessError,
    SubspaceLearner,
    SubspaceModel,
    assemble_jq,
    pretrain,
    solve_subspace,
)
from .synthetic import (
    DavisKahanResult,
    InputDist,
    SyntheticWorld,
    davis_kahan_check,
    exact_chat_minus_cn,
    exact_sin_theta,
    excess_risk,
    generate_world,
    population_covariance_eigenvalues,
    sample_task,
    true_subspace_model,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "RateReport",
    "SlopeFit",
    "default_experiment_config",
    "fit_slope",
    "run_experiment",
    "sin_theta_lambda_sweep",
    "LambdaStar",
    "SubspaceRidge",
    "TargetModel",
    "default_lambda_star",
    "embed",
    "fit_target",
    "predict_target",
    "Gaussian",
    "Kernel",
    "Laplacian",
    "Matern",
    "Polynomial",
    "kernel_from_dict",
    "NumericsError",
    "SpectralDecomposition",
    "psqrt_and_pinvsqrt",
    "spd_solve",
    "svd",
    "sym_eig",
    "GainRow",
    "RegimeResult",
    "RegularityParams",
    "classify_regime",
    "gain_conditions",
    "krr_optimal_lambda",
    "SplitTaskFit",
    "TaskRegressor",
    "fit_krr",
    "fit_split",
    "predict",
    "rkhs_inner",
    "RichnessError",
    "SubspaceLearner",
    "SubspaceModel",
    "assemble_jq",
    "pretrain",
    "solve_subspace",
    "DavisKahanResult",
    "InputDist",
    "SyntheticWorld",
    "davis_kahan_check",
    "exact_chat_minus_cn",
    "exact_sin_theta",
    "excess_risk",
    "generate_world",
    "population_covariance_eigenvalues",
    "sample_task",
    "true_subspace_model",
]
