"""Kernel-based distributed Q-learning for dynamic treatment regimes.

Library layout:

* ``kernels``      Gaussian kernel, Gram matrices, the KRR solve
* ``sim1``         flexible-stage trial simulator (actions A/B)
* ``sim2``         fixed six-stage dose-level trial simulator
* ``features``     the S+S / M+S / M+J / N+J feature cases
* ``learners``     backward-induction trainers (KRR, distributed KRR, LS)
* ``runtime``      worker pool, instrumentation, training-cost model
* ``evaluation``   rollouts, survival / CSP metrics, repeated trials
* ``config``       experiment configs and hyperparameter grids
* ``experiments``  grid search and the experiment/report flows
* ``cli``          the ``dkrr-dtr`` command
"""

from .config import ExperimentConfig, lambda_grid, sigma_grid
from .evaluation import (
    csp_metrics,
    fixed_policy_sim1,
    fixed_policy_sim2,
    mean_survival_time,
    repeated_trials,
    rollout,
)
from .kernels import KernelModel, KernelParams, gaussian_kernel, kernel_matrix, krr_fit, krr_predict
from .learners import (
    DtrPolicy,
    dkrr_dtr_train,
    greedy_action,
    krr_dtr_train,
    ls_dtr_train,
    load_policy,
    save_policy,
    stage_labels,
)
from .runtime import ComplexityInputs, optimal_workers, training_complexity
from .trajectories import ActionSet, Termination, Trajectory

__all__ = [
    "ActionSet",
    "ComplexityInputs",
    "DtrPolicy",
    "ExperimentConfig",
    "KernelModel",
    "KernelParams",
    "Termination",
    "Trajectory",
    "csp_metrics",
    "dkrr_dtr_train",
    "fixed_policy_sim1",
    "fixed_policy_sim2",
    "gaussian_kernel",
    "greedy_action",
    "kernel_matrix",
    "krr_dtr_train",
    "krr_fit",
    "krr_predict",
    "lambda_grid",
    "load_policy",
    "ls_dtr_train",
    "mean_survival_time",
    "optimal_workers",
    "repeated_trials",
    "rollout",
    "save_policy",
    "sigma_grid",
    "stage_labels",
    "training_complexity",
]

__version__ = "0.1.0"
