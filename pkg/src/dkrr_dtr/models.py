"""Stage Q-models: kernel or linear, joint or one-per-action.

A stage's Q-function is represented either by a single joint model whose
input ends with the action coordinate, or by one model per action fitted on
the rows where that action was taken.  ``predict_q_grid`` evaluates either
kind on every (context row, candidate action) pair and is the single
prediction path used by training labels, policy decisions and the
distributed cross-predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InputError
from .kernels import (
    KernelModel,
    KernelParams,
    krr_fit,
    krr_predict,
    krr_predict_action_grid,
)


@dataclass
class LinearModel:
    """Minimum-norm linear least squares fit with intercept."""

    coef: np.ndarray
    intercept: float


def linear_fit(X, y) -> LinearModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return LinearModel(coef=beta[:-1], intercept=float(beta[-1]))


def linear_predict(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X @ model.coef + model.intercept


StageModel = KernelModel | LinearModel


def predict(model: StageModel, X) -> np.ndarray:
    if isinstance(model, KernelModel):
        return krr_predict(model, X)
    return linear_predict(model, X)


@dataclass
class JointQ:
    model: StageModel


@dataclass
class PerActionQ:
    models: dict[float, StageModel]


StageQ = JointQ | PerActionQ


def fit_stage_q(
    contexts: np.ndarray,
    y: np.ndarray,
    taken_actions: np.ndarray,
    action_values: tuple[float, ...],
    separate: bool,
    fit_fn,
) -> StageQ:
    """Fit one stage model; ``fit_fn`` is krr or linear fitting.

    Separate cases fit each action on its own rows and require every action
    of the stage's set to appear at least once.
    """
    if not separate:
        X = np.hstack([contexts, taken_actions[:, None]])
        return JointQ(fit_fn(X, y))
    models: dict[float, StageModel] = {}
    for a in action_values:
        mask = taken_actions == a
        if not mask.any():
            raise DataError(
                f"action {a!r} has no training rows in this subset; "
                "separate-model cases need every action present per worker"
            )
        models[a] = fit_fn(contexts[mask], y[mask])
    return PerActionQ(models)


def krr_fitter(params: KernelParams):
    return lambda X, y: krr_fit(X, y, params)


def predict_q_grid(
    stage_q: StageQ, contexts: np.ndarray, action_values
) -> np.ndarray:
    """Q predictions for every context row under every candidate action.

    Returns an (n_rows, n_actions) array with columns in action-set order.
    """
    action_values = tuple(float(a) for a in action_values)
    if len(action_values) == 0:
        raise InputError("empty action set")
    contexts = np.asarray(contexts, dtype=np.float64)
    if isinstance(stage_q, PerActionQ):
        cols = []
        for a in action_values:
            if a not in stage_q.models:
                raise InputError(f"no per-action model for action {a!r}")
            cols.append(predict(stage_q.models[a], contexts))
        return np.column_stack(cols)
    model = stage_q.model
    if isinstance(model, KernelModel):
        return krr_predict_action_grid(model, contexts, action_values)
    cols = [
        linear_predict(
            model, np.hstack([contexts, np.full((contexts.shape[0], 1), a)])
        )
        for a in action_values
    ]
    return np.column_stack(cols)
