import numpy as np

from .errors import DegenerateError, ValidationError

UNIT_TOL = 1e-6


def check_unit(x: np.ndarray, name: str = "points", tol: float = UNIT_TOL) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    dev = np.abs(np.linalg.norm(x, axis=1) - 1.0).max()
    if dev > tol:
        raise ValidationError(f"{name} are not unit-norm (max deviation {dev:.3g})")
    return x


def normalize_rows(u: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norms < eps):
        raise DegenerateError("cannot normalize a zero-length vector")
    return u / norms


def normalize_backward(u: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. v = u/|u| back to u: (I - v v^T) g / |u|."""
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    v = u / norms
    return (grad_v - np.sum(grad_v * v, axis=-1, keepdims=True) * v) / norms
