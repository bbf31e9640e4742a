"""Spatial correlation matrices built from a distance kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .scenario import SensorField


def _squared_exponential(d, theta):
    return np.exp(-((d / theta) ** 2))


KERNELS = {"squared-exponential": _squared_exponential}


@dataclass(frozen=True)
class CorrelationModel:
    theta: float = 3.08
    kernel_kind: str = "squared-exponential"

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError(f"theta must be > 0, got {self.theta}")
        if self.kernel_kind not in KERNELS:
            raise ParameterError(
                f"unknown kernel {self.kernel_kind!r}; known: {sorted(KERNELS)}"
            )


def kernel_value(model: CorrelationModel, d):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ParameterError("distances must be >= 0")
    out = KERNELS[model.kernel_kind](d, model.theta)
    return float(out) if out.ndim == 0 else out


def build_correlation(field: SensorField, model: CorrelationModel, D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.shape != (field.M, field.M):
        raise ParameterError(f"distance matrix is {D.shape}, field has M={field.M}")
    s = field.sigma
    C = np.outer(s, s) * kernel_value(model, D)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, s**2)
    return C


def psd_project(C: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).

    Returns the input unchanged when its smallest eigenvalue is already above
    ``-tol * max|eig|``.
    """
    C = np.asarray(C, dtype=float)
    C = 0.5 * (C + C.T)
    w, V = np.linalg.eigh(C)
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    if w.min() >= -tol * scale:
        return C.copy()
    w = np.clip(w, 0.0, None)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)
