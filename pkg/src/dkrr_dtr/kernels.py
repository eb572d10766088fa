"""Gaussian-kernel evaluation and kernel ridge regression (KRR).

One stage model is the solution of the regularized least squares problem

    minimize (1/n) * sum_i (y_i - Q(x_i))^2 + lam * ||Q||_K^2

over the RKHS of the Gaussian kernel

    k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)),

whose dual form is the n x n linear system (K + n * lam * I) alpha = y.  The
ridge is scaled by n so that lam stays comparable across data partitions of
different sizes.

All routines are pure functions of their inputs and safe to call from many
threads.  Squared distances are accumulated coordinate by coordinate in a
fixed order, which makes kernel_matrix(X, X2) exactly equal to the transpose
of kernel_matrix(X2, X) and keeps results independent of internal chunking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, NumericalError

# Diagonal jitter retried once when round-off makes K + n*lam*I numerically
# non-SPD; scaled by trace(K) (= n for the Gaussian kernel).
_JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class KernelParams:
    """Gaussian kernel width sigma and ridge coefficient lam, both > 0.

    A single (sigma, lam) pair is shared by all clinical stages of a policy.
    """

    sigma: float
    lam: float

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise InputError(f"sigma must be positive, got {self.sigma}")
        if not (self.lam > 0.0):
            raise InputError(f"lam must be positive, got {self.lam}")


@dataclass
class KernelModel:
    """A fitted KRR stage model: Q(x) = sum_i alphas[i] * k(support[i], x)."""

    support: np.ndarray  # (n, d) training inputs
    alphas: np.ndarray  # (n,) dual coefficients
    params: KernelParams

    def __post_init__(self):
        self.support = np.ascontiguousarray(self.support, dtype=np.float64)
        self.alphas = np.ascontiguousarray(self.alphas, dtype=np.float64)
        if self.support.ndim != 2:
            raise InputError("support points must form a 2-D array")
        if self.alphas.shape != (self.support.shape[0],):
            raise InputError("alphas length must match the number of support points")

    @property
    def dim(self) -> int:
        return self.support.shape[1]


def _as_matrix(X, name: str) -> np.ndarray:
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise InputError(f"{name} must be a vector or a 2-D array")
    return A


def squared_distances(X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, accumulated per coordinate.

    The per-coordinate loop (rather than the usual ||x||^2 - 2 x.y + ||y||^2
    expansion) guarantees bitwise symmetry under swapping X and X2 and avoids
    cancellation for near-coincident points.
    """
    X = _as_matrix(X, "X")
    X2 = _as_matrix(X2, "X2")
    if X.shape[1] != X2.shape[1]:
        raise InputError(
            f"dimension mismatch: {X.shape[1]}-dim vs {X2.shape[1]}-dim inputs"
        )
    S = np.zeros((X.shape[0], X2.shape[0]))
    for d in range(X.shape[1]):
        diff = X[:, d, None] - X2[None, :, d]
        S += diff * diff
    return S


def gaussian_kernel(x, x2, sigma: float) -> float:
    """exp(-||x - x2||^2 / (2 sigma^2)); value in (0, 1], symmetric."""
    if not (sigma > 0.0):
        raise InputError(f"sigma must be positive, got {sigma}")
    return float(np.exp(-squared_distances(x, x2)[0, 0] / (2.0 * sigma * sigma)))


def kernel_matrix(X, X2, sigma: float) -> np.ndarray:
    """Gram matrix with entry (i, j) = gaussian_kernel(X[i], X2[j], sigma)."""
    if not (sigma > 0.0):
        raise InputError(f"sigma must be positive, got {sigma}")
    return np.exp(-squared_distances(X, X2) / (2.0 * sigma * sigma))


def krr_fit(X, y, params: KernelParams) -> KernelModel:
    """Solve (K + n * lam * I) alpha = y by Cholesky factorization.

    The system is SPD in exact arithmetic.  If the factorization fails from
    round-off, a jitter of _JITTER_SCALE * trace(K) is added to the diagonal
    once; a second failure raises NumericalError.
    """
    X = _as_matrix(X, "X")
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 1:
        raise InputError("krr_fit needs at least one sample")
    if y.shape != (n,):
        raise InputError(f"y must have shape ({n},), got {y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise InputError("krr_fit inputs must be finite")

    K = kernel_matrix(X, X, params.sigma)
    A = K + (n * params.lam) * np.eye(n)
    try:
        alphas = _spd_solve(A, y)
    except np.linalg.LinAlgError:
        A[np.diag_indices_from(A)] += _JITTER_SCALE * np.trace(K)
        try:
            alphas = _spd_solve(A, y)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"KRR system not SPD after jitter (n={n}, sigma={params.sigma}, "
                f"lam={params.lam})"
            ) from exc
    return KernelModel(support=X, alphas=alphas, params=params)


def _spd_solve(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    c, low = cho_factor(A, lower=True, check_finite=False)
    return cho_solve((c, low), y, check_finite=False)


def krr_predict(model: KernelModel, Xq) -> np.ndarray:
    """Predictions sum_i alphas[i] * k(support[i], x_q) for each query row.

    Each output row is reduced independently (not via a BLAS matvec), so
    permuting query rows permutes the outputs bitwise.
    """
    Xq = _as_matrix(Xq, "Xq")
    if Xq.shape[1] != model.dim:
        raise InputError(
            f"query dimension {Xq.shape[1]} != support dimension {model.dim}"
        )
    K = kernel_matrix(Xq, model.support, model.params.sigma)
    return (K * model.alphas[None, :]).sum(axis=1)


def krr_predict_action_grid(
    model: KernelModel, contexts, action_values
) -> np.ndarray:
    """Predictions on every (context row, candidate action) pair.

    The model's inputs must have the action as their last coordinate.  The
    Gaussian kernel then factorizes over the split, so the state part of the
    Gram matrix is built once and the per-action corrections reduce to one
    matrix product:

        Q[p, a] = sum_i k_state(c_p, s_i) * alphas[i] * k_act(a, a_i).

    Returns an (n_contexts, n_actions) array.
    """
    contexts = _as_matrix(contexts, "contexts")
    if contexts.shape[1] != model.dim - 1:
        raise InputError(
            f"contexts must have dimension {model.dim - 1}, got {contexts.shape[1]}"
        )
    acts = np.asarray(action_values, dtype=np.float64)
    if acts.ndim != 1 or acts.size == 0:
        raise InputError("action_values must be a nonempty 1-D sequence")
    inv = 1.0 / (2.0 * model.params.sigma ** 2)
    base = np.exp(-squared_distances(contexts, model.support[:, :-1]) * inv)
    d_act = acts[:, None] - model.support[None, :, -1]
    weights = np.exp(-(d_act * d_act) * inv) * model.alphas[None, :]
    return base @ weights.T
