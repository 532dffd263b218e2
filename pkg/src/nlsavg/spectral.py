"""Eigenbasis of ``A_V = -Laplacian + V`` on the periodic torus and the mode map.

The operator is discretised by Galerkin projection onto a real trigonometric
basis (cosines and sines up to a cut-off ``K`` in every axis). With the
cut-off ``K = (N - 1) // 4`` every quartic product of retained functions is
integrated exactly by the uniform trapezoid rule on the ``N``-point grid, which
is what the cubic nonlinearity needs downstream.
"""
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_field
from .exceptions import ConfigurationError, DomainError, InsufficientDataError, ShapeError

FORMAT_VERSION = 1
TWO_PI = 2.0 * np.pi
CLUSTER_RTOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, 2*pi)^dim`` with ``n`` points per axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ConfigurationError(f"points per axis must be a power of two >= 8, got {self.n}")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self):
        return self.n**self.dim

    @property
    def spacing(self):
        return TWO_PI / self.n

    @property
    def weight(self):
        """Quadrature weight of one grid cell, ``(2 pi / N)^d``."""
        return self.spacing**self.dim

    @property
    def volume(self):
        return TWO_PI**self.dim

    @property
    def cutoff(self):
        """Largest plane-wave index kept in the Galerkin matrix."""
        return (self.n - 1) // 4

    def coordinates(self):
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def wavenumbers(self):
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.meshgrid(*([k] * self.dim), indexing="ij")

    def laplacian(self, u):
        """Spectral Laplacian over the trailing ``dim`` axes of ``u``."""
        axes = tuple(range(-self.dim, 0))
        ksq = sum(k**2 for k in self.wavenumbers())
        return np.fft.ifftn(-ksq * np.fft.fftn(u, axes=axes), axes=axes)

    def inner(self, u, w):
        """Real L2 pairing ``Re int u conj(w) dx`` by grid quadrature."""
        axes = tuple(range(-self.dim, 0))
        return self.weight * np.sum(np.real(u * np.conj(w)), axis=axes)


def _trig_terms_values(grid, offset, terms):
    xs = grid.coordinates()
    values = np.full(grid.shape, float(offset))
    for term in terms:
        k = np.atleast_1d(np.asarray(term["k"], dtype=float))
        if k.shape[0] != grid.dim:
            raise ConfigurationError(f"wave vector {term['k']} does not match dim={grid.dim}")
        phase = sum(ki * xi for ki, xi in zip(k, xs))
        values = values + term.get("cos", 0.0) * np.cos(phase) + term.get("sin", 0.0) * np.sin(phase)
    return values


def _half_lattice(dim, kmax):
    """Nonzero wave vectors with |k_i| <= kmax, one of each +/- pair."""
    rng = range(-kmax, kmax + 1)
    out = []
    for k in itertools.product(rng, repeat=dim):
        first = next((c for c in k if c != 0), 0)
        if first > 0:
            out.append(k)
    return out


@dataclass
class Potential:
    """Real potential sampled on a grid together with a closed-form description.

    The description is a JSON-compatible dict whose ``kind`` is one of
    ``constant``, ``trig``, ``random_trig`` or ``values``.
    """

    grid: Grid
    values: np.ndarray
    description: dict = field(default_factory=lambda: {"kind": "values"})

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ShapeError(f"potential has shape {self.values.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("potential contains non-finite values")

    @property
    def minimum(self):
        return float(self.values.min())

    @classmethod
    def constant(cls, grid, value=1.0):
        return cls(grid, np.full(grid.shape, float(value)), {"kind": "constant", "value": float(value)})

    @classmethod
    def trig(cls, grid, offset, terms):
        """``offset + sum_j (a_j cos(k_j.x) + b_j sin(k_j.x))``.

        ``terms`` is a list of dicts ``{"k": [..], "cos": a, "sin": b}``.
        """
        terms = [
            {"k": [int(c) for c in np.atleast_1d(t["k"])], "cos": float(t.get("cos", 0.0)), "sin": float(t.get("sin", 0.0))}
            for t in terms
        ]
        desc = {"kind": "trig", "offset": float(offset), "terms": terms}
        return cls(grid, _trig_terms_values(grid, offset, terms), desc)

    @classmethod
    def random_trig(cls, grid, seed, degree=3, amplitude=0.5):
        """Random trigonometric polynomial shifted so that its minimum lies in ``[1.0, 1.5)``."""
        rng = np.random.default_rng(seed)
        terms = []
        for k in _half_lattice(grid.dim, degree):
            scale = amplitude / (1.0 + float(np.dot(k, k)))
            a, b = rng.normal(scale=scale, size=2)
            terms.append({"k": list(k), "cos": float(a), "sin": float(b)})
        shape_vals = _trig_terms_values(grid, 0.0, terms)
        offset = 1.0 + 0.5 * rng.uniform() - shape_vals.min()
        desc = {
            "kind": "random_trig",
            "seed": int(seed),
            "degree": int(degree),
            "amplitude": float(amplitude),
            "offset": float(offset),
            "terms": terms,
        }
        return cls(grid, shape_vals + offset, desc)

    @classmethod
    def from_description(cls, grid, desc, values=None):
        kind = desc.get("kind")
        if kind == "constant":
            return cls.constant(grid, desc.get("value", 1.0))
        if kind == "trig":
            return cls.trig(grid, desc["offset"], desc["terms"])
        if kind == "random_trig":
            return cls.random_trig(grid, desc["seed"], desc.get("degree", 3), desc.get("amplitude", 0.5))
        if kind == "values":
            if values is None:
                raise ConfigurationError("a 'values' potential needs explicit grid values")
            return cls(grid, np.asarray(values, dtype=float).reshape(grid.shape), dict(desc))
        raise ConfigurationError(f"unknown potential kind {kind!r}")


def real_trig_basis(grid):
    """Orthonormal real trigonometric functions with ``|k_i| <= grid.cutoff``.

    Returns ``(functions, ksq)`` where ``functions`` has shape ``(n_pw, n**dim)``
    and ``ksq`` holds the Laplacian eigenvalue ``|k|^2`` of each row.
    """
    xs = [x.ravel() for x in grid.coordinates()]
    vol = grid.volume
    rows = [np.full(grid.size, 1.0 / np.sqrt(vol))]
    ksq = [0.0]
    waves = sorted(_half_lattice(grid.dim, grid.cutoff), key=lambda k: (np.dot(k, k), k))
    norm = np.sqrt(2.0 / vol)
    for k in waves:
        phase = sum(ki * xi for ki, xi in zip(k, xs))
        rows.append(norm * np.cos(phase))
        rows.append(norm * np.sin(phase))
        ksq.extend([float(np.dot(k, k))] * 2)
    return np.array(rows), np.array(ksq)


def _canonical_block(C):
    """Basis of ``span(C)`` that depends only on the span.

    Greedy Gram-Schmidt on the projections of the plane-wave unit vectors: at
    each step the first plane wave whose residual projection is at least half
    the largest one is taken. This also fixes the sign of every vector.
    """
    coords = C.T.copy()
    out = np.empty_like(C)
    for s in range(C.shape[1]):
        norms = np.linalg.norm(coords, axis=0)
        j = int(np.flatnonzero(norms >= 0.5 * norms.max())[0])
        q = coords[:, j] / norms[j]
        out[:, s] = C @ q
        coords -= np.outer(q, q @ coords)
    return out


def _canonical_eigenvectors(evals, evecs, m):
    """Canonicalise eigenvector clusters (relative gap below ``CLUSTER_RTOL``) that touch the first ``m``."""
    out = evecs.copy()
    i = 0
    while i < m:
        j = i + 1
        while j < len(evals) and evals[j] - evals[j - 1] <= CLUSTER_RTOL * max(1.0, abs(evals[j])):
            j += 1
        out[:, i:j] = _canonical_block(evecs[:, i:j])
        i = j
    return out


def _as_potential(X):
    if isinstance(X, Potential):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim not in (1, 2) or len(set(arr.shape)) != 1:
        raise ShapeError(f"cannot infer a grid from potential values of shape {arr.shape}")
    return Potential(Grid(arr.ndim, arr.shape[0]), arr)


class SpectralBasis(TransformerMixin, BaseEstimator):
    """First ``n_modes`` real eigenpairs of ``A_V`` and the associated mode map.

    ``fit`` takes a :class:`Potential` (or raw grid values of one). After
    fitting, ``transform`` projects fields onto the eigenfunctions and
    ``inverse_transform`` synthesises fields from mode coefficients.

    Attributes
    ----------
    eigenvalues_ : ndarray of shape (n_modes,)
        Ascending eigenvalues.
    eigenvectors_ : ndarray of shape (n_modes, n_points)
        Real eigenfunctions sampled on the flattened grid, orthonormal under
        grid quadrature.
    """

    def __init__(self, n_modes=16):
        self.n_modes = n_modes

    def fit(self, X, y=None):
        potential = _as_potential(X)
        grid = potential.grid
        m = int(self.n_modes)
        if m < 1:
            raise ConfigurationError("n_modes must be positive")
        limit = int(np.floor((grid.n / 3.0) ** grid.dim))
        if m > limit:
            raise ConfigurationError(
                f"truncation {m} exceeds dealiasing limit (N/3)^d = {limit} for N={grid.n}, d={grid.dim}"
            )
        if potential.minimum < 1.0 - 1e-12:
            raise DomainError(f"potential minimum {potential.minimum:.6g} is below 1")

        functions, ksq = real_trig_basis(grid)
        if m > functions.shape[0]:
            raise ConfigurationError(f"truncation {m} exceeds plane-wave basis size {functions.shape[0]}")
        vflat = potential.values.ravel()
        matrix = np.diag(ksq) + grid.weight * (functions * vflat) @ functions.T
        matrix = 0.5 * (matrix + matrix.T)
        evals, evecs = np.linalg.eigh(matrix)
        order = np.argsort(evals, kind="stable")
        evals, evecs = evals[order], _canonical_eigenvectors(evals[order], evecs[:, order], m)

        self.grid_ = grid
        self.potential_ = potential
        self.eigenvalues_ = evals[:m]
        self.eigenvectors_ = evecs[:, :m].T @ functions
        self.quadrature_weight_ = grid.weight
        self.n_modes_ = m
        return self

    def transform(self, X):
        return mode_transform(X, self)

    def inverse_transform(self, X):
        return mode_inverse(X, self)

    def orthonormality_residual(self):
        check_is_fitted(self)
        z = self.eigenvectors_
        gram = self.quadrature_weight_ * z @ z.T
        return float(np.max(np.abs(gram - np.eye(self.n_modes_))))

    def potential_expectations(self):
        """``<V zeta_k, zeta_k>`` for every retained mode."""
        check_is_fitted(self)
        z = self.eigenvectors_
        return self.quadrature_weight_ * np.einsum("kx,x,kx->k", z, self.potential_.values.ravel(), z)

    def to_dict(self):
        check_is_fitted(self)
        doc = {
            "format_version": FORMAT_VERSION,
            "dim": self.grid_.dim,
            "N": self.grid_.n,
            "M": self.n_modes_,
            "eigenvalues": self.eigenvalues_.tolist(),
            "eigenvectors": self.eigenvectors_.tolist(),
            "potential": self.potential_.description,
        }
        if self.potential_.description.get("kind") == "values":
            doc["potential_values"] = self.potential_.values.ravel().tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported basis format_version {doc.get('format_version')!r}")
        grid = Grid(int(doc["dim"]), int(doc["N"]))
        potential = Potential.from_description(grid, doc["potential"], doc.get("potential_values"))
        est = cls(n_modes=int(doc["M"]))
        est.grid_ = grid
        est.potential_ = potential
        est.eigenvalues_ = np.asarray(doc["eigenvalues"], dtype=float)
        est.eigenvectors_ = np.asarray(doc["eigenvectors"], dtype=float)
        if est.eigenvectors_.shape != (est.n_modes, grid.size):
            raise ShapeError(f"eigenvector block has shape {est.eigenvectors_.shape}")
        est.quadrature_weight_ = grid.weight
        est.n_modes_ = est.n_modes
        return est

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def assemble_operator(potential, grid=None, truncation=16):
    """Diagonalise ``A_V`` for ``potential`` and keep ``truncation`` eigenpairs."""
    if grid is not None and grid != potential.grid:
        raise ShapeError(f"potential lives on {potential.grid}, not on {grid}")
    return SpectralBasis(n_modes=truncation).fit(potential)


def weyl_fit(basis):
    """Least-squares fit ``log lambda_k ~ a log k + b`` over the upper half of the spectrum.

    Returns ``(a, b)``; for d-dimensional tori ``a`` approaches ``2/d``.
    """
    check_is_fitted(basis)
    m = basis.n_modes_
    if m < 16:
        raise InsufficientDataError(f"Weyl fit needs at least 16 modes, got {m}")
    k = np.arange(1, m + 1)
    upper = k > m // 2
    slope, intercept = np.polyfit(np.log(k[upper]), np.log(basis.eigenvalues_[upper]), 1)
    return float(slope), float(intercept)


def mode_transform(u, basis):
    """Coefficients ``v_k = <u, zeta_k>`` (complex projection, grid quadrature).

    ``u`` may carry leading batch axes; the trailing axes must match the grid
    shape, or a single trailing axis of length ``N**d``.
    """
    check_is_fitted(basis)
    grid = basis.grid_
    arr = np.asarray(u)
    if arr.shape[-1:] == (grid.size,) and grid.dim > 1:
        arr = arr.reshape(arr.shape[:-1] + grid.shape)
    arr = check_field(arr, grid.shape)
    flat = arr.reshape(arr.shape[: arr.ndim - grid.dim] + (grid.size,))
    return basis.quadrature_weight_ * (flat @ basis.eigenvectors_.T)


def mode_inverse(v, basis):
    """Synthesise ``u = sum_k v_k zeta_k`` on the grid."""
    check_is_fitted(basis)
    arr = np.asarray(v)
    if arr.ndim == 0 or arr.shape[-1] != basis.n_modes_:
        raise ShapeError(f"mode vector has shape {arr.shape}, expected trailing length {basis.n_modes_}")
    arr = arr.astype(complex, copy=False)
    flat = arr @ basis.eigenvectors_
    return flat.reshape(arr.shape[:-1] + basis.grid_.shape)


def hp_norm(v, basis, p):
    """Weighted norm ``(sum_k |v_k|^2 lambda_k^p)^(1/2)`` over the last axis."""
    check_is_fitted(basis)
    arr = np.asarray(v)
    if arr.shape[-1] != basis.n_modes_:
        raise ShapeError(f"mode vector has shape {arr.shape}, expected trailing length {basis.n_modes_}")
    return np.sqrt(np.sum(np.abs(arr) ** 2 * basis.eigenvalues_**p, axis=-1))


def apply_operator(u, basis, power=1):
    """``A_V^power u`` computed on the grid (spectral Laplacian, pointwise potential)."""
    check_is_fitted(basis)
    grid = basis.grid_
    out = check_field(u, grid.shape)
    for _ in range(int(power)):
        out = -grid.laplacian(out) + basis.potential_.values * out
    return out


def sobolev_norm(u, p, grid=None):
    """``||u||_p`` with ``||u||_p^2 = <(-Laplacian)^p u, u> + <u, u>`` for integer ``p >= 1``.

    ``p = 0`` gives the plain L2 norm. The dimension is taken from ``grid``
    or, if omitted, from ``u.ndim``.
    """
    arr = np.asarray(u, dtype=complex)
    if grid is None:
        grid = Grid(arr.ndim, arr.shape[0])
    arr = check_field(arr, grid.shape)
    p = int(p)
    if p < 0:
        raise DomainError("Sobolev index must be non-negative")
    axes = tuple(range(-grid.dim, 0))
    coeffs = np.fft.fftn(arr, axes=axes)
    ksq = sum(k**2 for k in grid.wavenumbers())
    mult = np.ones_like(ksq) if p == 0 else ksq**p + 1.0
    total = np.sum(mult * np.abs(coeffs) ** 2, axis=axes)
    return np.sqrt(grid.volume * total) / grid.size
