"""Small input-validation helpers shared by the estimators and free functions."""
import numpy as np

from .exceptions import DomainError, ShapeError


def check_mode_vector(v, n_modes=None, name="v"):
    """Return ``v`` as a 1-d complex array, optionally checking its length."""
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n_modes is not None and arr.shape[0] != n_modes:
        raise ShapeError(f"{name} has length {arr.shape[0]}, expected {n_modes}")
    arr = arr.astype(complex, copy=False)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def check_real_vector(x, n=None, name="x"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def check_field(u, grid_shape, name="u"):
    """Validate a field on the grid; leading batch axes are allowed."""
    arr = np.asarray(u)
    nd = len(grid_shape)
    if arr.ndim < nd or tuple(arr.shape[arr.ndim - nd:]) != tuple(grid_shape):
        raise ShapeError(f"{name} has shape {arr.shape}, expected trailing {tuple(grid_shape)}")
    arr = arr.astype(complex, copy=False)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr
