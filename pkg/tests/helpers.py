"""Shared oracles for the test suite."""

import numpy as np


def unit(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar f at array x (x is restored afterwards)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    """Worst per-coordinate relative error, measured against at least ``floor`` for near-zero coordinates."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))
