"""Input validation helpers used by the public entry points."""

import numpy as np

from .exceptions import InputValidationError


def require(condition, message):
    if not condition:
        raise InputValidationError(message)


def as_matrix(X, name="X", n_cols=None):
    """Coerce to a 2-d float64 array, optionally checking the column count."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    require(X.ndim == 2, f"{name} must be a 2-d array, got ndim={X.ndim}")
    require(np.all(np.isfinite(X)), f"{name} contains non-finite values")
    if n_cols is not None:
        require(
            X.shape[1] == n_cols,
            f"{name} has {X.shape[1]} columns, expected {n_cols}",
        )
    return X


def as_vector(v, name="y", length=None):
    v = np.asarray(v, dtype=float).reshape(-1)
    require(np.all(np.isfinite(v)), f"{name} contains non-finite values")
    if length is not None:
        require(len(v) == length, f"{name} has length {len(v)}, expected {length}")
    return v


def as_group_indices(groups, k, length=None, name="groups"):
    g = np.asarray(groups)
    require(g.ndim == 1, f"{name} must be 1-d")
    require(
        np.issubdtype(g.dtype, np.integer) or np.all(g == g.astype(int)),
        f"{name} must hold integer group indices",
    )
    g = g.astype(int)
    if length is not None:
        require(len(g) == length, f"{name} has length {len(g)}, expected {length}")
    if len(g):
        require(
            g.min() >= 0 and g.max() < k,
            f"{name} indices must lie in [0, {k})",
        )
    return g


def check_square_symmetric(M, name="matrix", rtol=1e-8):
    M = np.asarray(M, dtype=float)
    require(M.ndim == 2 and M.shape[0] == M.shape[1], f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    require(
        float(np.max(np.abs(M - M.T))) <= rtol * scale if M.size else True,
        f"{name} must be symmetric",
    )
    return 0.5 * (M + M.T)


def positive_scalar(value, name):
    value = float(value)
    require(np.isfinite(value) and value > 0.0, f"{name} must be a positive real, got {value}")
    return value


def nonnegative_scalar(value, name):
    value = float(value)
    require(np.isfinite(value) and value >= 0.0, f"{name} must be a nonnegative real, got {value}")
    return value
