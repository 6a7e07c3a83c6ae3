"""Input validation helpers shared across the package."""

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails after its retry policy."""


def as_points(X, name="X", allow_empty=True):
    """Coerce ``X`` to a 2-D float array of points (rows) in R^d."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(0, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of points, got ndim={X.ndim}")
    if not allow_empty and X.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one point")
    if X.shape[0] and X.shape[1] < 1:
        raise ValueError(f"{name} must have dimension d >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_vector(x, name="x"):
    """Coerce ``x`` to a 1-D float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_same_dim(d1, d2, name1="x", name2="y"):
    if d1 != d2:
        raise ValueError(f"dimension mismatch: {name1} has d={d1}, {name2} has d={d2}")


def check_positive(value, name):
    if not (value > 0):
        raise ValueError(f"{name} must be positive, got {value}")


def check_nonneg(value, name):
    if not (value >= 0):
        raise ValueError(f"{name} must be nonnegative, got {value}")


def check_in_open_unit(value, name):
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
