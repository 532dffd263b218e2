"""Action-angle coordinates on mode space.

``I_k = |v_k|^2 / 2`` and ``phi_k = Arg v_k`` in ``[0, 2 pi)``, with the angle
of a (numerically) vanishing mode set to zero.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_mode_vector
from .exceptions import DomainError, ShapeError

TWO_PI = 2.0 * np.pi
ZERO_AMPLITUDE = 1e-14


def wrap_angle(theta):
    """Reduce angles to ``[0, 2 pi)``."""
    out = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    # mod can return exactly 2 pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def actions(v):
    return 0.5 * np.abs(np.asarray(v)) ** 2


def angles(v):
    v = np.asarray(v, dtype=complex)
    phi = wrap_angle(np.angle(v))
    return np.where(np.abs(v) < ZERO_AMPLITUDE, 0.0, phi)


def rotate(v, theta):
    """Torus action ``(Phi_theta v)_k = exp(i theta_k) v_k``."""
    v = np.asarray(v, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != v.shape[-1:]:
        raise ShapeError(f"angle vector shape {theta.shape} does not match mode vector {v.shape}")
    return v * np.exp(1j * theta)


def lift(I, theta):
    """Right inverse of :func:`actions`: ``v_k = sqrt(2 I_k) exp(i theta_k)``."""
    I = np.asarray(I, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(I < 0):
        raise DomainError("actions must be non-negative")
    if theta.shape != I.shape:
        raise ShapeError(f"angle vector shape {theta.shape} does not match action vector {I.shape}")
    return np.sqrt(2.0 * I) * np.exp(1j * theta)


def action_norm(I, basis, p):
    """Weighted l1 norm ``2 sum_k lambda_k^p |I_k|`` over the last axis."""
    I = np.asarray(I, dtype=float)
    return 2.0 * np.sum(basis.eigenvalues_**p * np.abs(I), axis=-1)


def action_sup_norm(I):
    return np.max(np.abs(np.asarray(I, dtype=float)), axis=-1)


class ActionAngleMap(TransformerMixin, BaseEstimator):
    """Stateless transformer ``v -> [I, phi]``; ``inverse_transform`` lifts back.

    Rows of ``X`` are mode vectors. The output concatenates the ``M`` actions
    and the ``M`` angles, so it has ``2 M`` real columns.
    """

    def fit(self, X, y=None):
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        self.n_modes_ = X.shape[1]
        return self

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        if hasattr(self, "n_modes_"):
            check_mode_vector(X[0], self.n_modes_, name="X row")
        return np.hstack([actions(X), angles(X)])

    def inverse_transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] % 2:
            raise ShapeError("expected an even number of columns [actions, angles]")
        m = X.shape[1] // 2
        return lift(X[:, :m], X[:, m:])
