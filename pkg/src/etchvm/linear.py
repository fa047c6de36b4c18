"""Least-squares linear / affine baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from etchvm.data import Dataset
from etchvm.errors import DataError, SingularityError

RIDGE_JITTER = 1e-10
# smallest/largest eigenvalue of X^T X below which the jitter no longer
# yields a meaningful solution
RANK_TOL = 1e-13


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    with_bias: bool = True

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise DataError("linear model parameters must be finite")
        if not self.with_bias and self.bias != 0.0:
            raise DataError("bias must be 0 when with_bias is false")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


def _design(x: np.ndarray, with_bias: bool) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))]) if with_bias else x


def fit_linear(dataset: Dataset, with_bias: bool = True) -> LinearModel:
    """Solve the normal equations ``(X^T X + jitter I) w = X^T y``."""
    x = _design(dataset.features, with_bias)
    n, k = x.shape
    if n < k:
        raise DataError(f"need at least {k} rows to fit {k} coefficients, got {n}")
    y = dataset.targets
    gram = x.T @ x
    eig = np.linalg.eigvalsh(gram)
    if eig[-1] <= 0 or eig[0] < RANK_TOL * eig[-1]:
        raise SingularityError("design matrix is rank deficient")
    coef = np.linalg.solve(gram + RIDGE_JITTER * np.eye(k), x.T @ y)
    if with_bias:
        return LinearModel(coef[:-1], float(coef[-1]), True)
    return LinearModel(coef, 0.0, False)


def predict_linear(model: LinearModel, x) -> float | np.ndarray:
    """``weights . x + bias`` for one vector, or row-wise for a matrix."""
    a = np.asarray(x, dtype=np.float64)
    if a.shape[-1] != model.weights.shape[0]:
        raise DataError(f"input length {a.shape[-1]} != model dimension {model.weights.shape[0]}")
    out = a @ model.weights + model.bias
    return float(out) if a.ndim == 1 else out
