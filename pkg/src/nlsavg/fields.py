"""The perturbation and its action/angle vector fields.

The built-in family is the complex Ginzburg-Landau right-hand side

    P(u) = Lap u - gamma_R f_p(|u|^2) u - i gamma_I f_q(|u|^2) u,

split into a linear part (``Lap u``), a dissipative part (``gamma_R``) and a
Hamiltonian part (``gamma_I``). Everything except the stiff ``-i A_V / eps``
rotation lives here.
"""
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError, DomainError
from .spectral import mode_inverse, mode_transform

KINDS = ("cgl", "cubic_hamiltonian", "zero", "custom")
PARTS = ("linear", "dissipative", "hamiltonian")


@dataclass(frozen=True)
class NonlinearitySpec:
    """Parameters of the perturbation.

    ``kind="cubic_hamiltonian"`` keeps only ``-i gamma_I f_q(|u|^2) u``.
    ``kind="custom"`` calls ``plugin(u, lap_u, grad_u, x)`` on the grid, where
    ``grad_u`` is a list of partial derivatives and ``x`` the coordinate arrays.
    """

    kind: str = "cgl"
    gamma_R: float = 1.0
    gamma_I: float = 1.0
    exp_p: float = 1.0
    exp_q: float = 1.0
    smoothing_radius: float = 1e-6
    include_laplacian_dissipation: bool = True
    plugin: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown nonlinearity kind {self.kind!r}")
        for name in ("gamma_R", "gamma_I", "exp_p", "exp_q", "smoothing_radius"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.kind == "custom" and self.plugin is None:
            raise ConfigurationError("custom nonlinearity needs a plugin callable")

    @classmethod
    def zero(cls):
        return cls(kind="zero", gamma_R=0.0, gamma_I=0.0, include_laplacian_dissipation=False)

    def satisfies_cgl_conditions(self, dim=1):
        """Whether gamma_R, gamma_I > 0 and the exponents are admissible in ``dim``."""
        if self.kind != "cgl" or self.gamma_R <= 0 or self.gamma_I <= 0:
            return False
        if dim <= 2:
            return True
        bound = min(dim / 2.0, 2.0 / (dim - 2))
        return self.exp_p < bound and self.exp_q < bound

    @property
    def b2(self):
        """Absorbing-ball radius ``gamma_R^(-1/(2p))`` of the L2 norm."""
        if self.gamma_R <= 0 or self.exp_p <= 0:
            return np.inf
        return self.gamma_R ** (-1.0 / (2.0 * self.exp_p))

    def to_dict(self):
        d = asdict(self)
        d.pop("plugin")
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__ and k != "plugin"}
        return cls(**known)


def _is_whole(p):
    return float(p).is_integer()


def _hermite_coeffs(p, r0):
    """End data (value, d/dt, d2/dt2) of ``r^p`` at ``r = r0`` in the unit variable ``t = r/r0``."""
    y = r0**p
    return y, p * y, p * (p - 1) * y


def smoothed_power(r, p, r0):
    """``f(r) = r^p`` for ``r >= r0`` with a C^2 quintic blend to zero on ``[0, r0]``.

    Whole exponents, and ``r0 = 0``, return the monomial itself.
    """
    r = np.asarray(r, dtype=float)
    if p == 0:
        return np.ones_like(r)
    if _is_whole(p) or r0 <= 0:
        return r**p
    y0, y1, y2 = _hermite_coeffs(p, r0)
    t = np.clip(r / r0, 0.0, 1.0)
    t3 = t**3
    blend = y0 * t3 * (10 - 15 * t + 6 * t**2) + y1 * t3 * (-4 + 7 * t - 3 * t**2) + y2 * t3 * (0.5 - t + 0.5 * t**2)
    return np.where(r >= r0, np.maximum(r, r0) ** p, blend)


def smoothed_power_primitive(r, p, r0):
    """``int_0^r f(s) ds`` for :func:`smoothed_power`."""
    r = np.asarray(r, dtype=float)
    if _is_whole(p) or r0 <= 0:
        return r ** (p + 1) / (p + 1)
    y0, y1, y2 = _hermite_coeffs(p, r0)
    t = np.clip(r / r0, 0.0, 1.0)
    t4 = t**4
    inner = r0 * (
        y0 * t4 * (2.5 - 3 * t + t**2) + y1 * t4 * (-1 + 1.4 * t - 0.5 * t**2) + y2 * t4 * (0.125 - 0.2 * t + t**2 / 12)
    )
    full = r0 * (0.5 * y0 - 0.1 * y1 + y2 / 120.0)
    rr = np.maximum(r, r0)
    return np.where(r >= r0, full + (rr ** (p + 1) - r0 ** (p + 1)) / (p + 1), inner)


def _gradient(u, grid):
    axes = tuple(range(-grid.dim, 0))
    uh = np.fft.fftn(u, axes=axes)
    return [np.fft.ifftn(1j * k * uh, axes=axes) for k in grid.wavenumbers()]


def eval_field_rhs(u, spec, grid, parts=PARTS):
    """Pointwise perturbation ``P(Lap u, grad u, u, x)`` on the grid.

    ``parts`` selects a subset of ``("linear", "dissipative", "hamiltonian")``
    for the built-in kinds; it is ignored for ``custom``.
    """
    u = np.asarray(u, dtype=complex)
    if spec.kind == "zero":
        return np.zeros_like(u)
    if spec.kind == "custom":
        return np.asarray(spec.plugin(u, grid.laplacian(u), _gradient(u, grid), grid.coordinates()), dtype=complex)

    out = np.zeros_like(u)
    if spec.kind == "cgl" and "linear" in parts and spec.include_laplacian_dissipation:
        out += grid.laplacian(u)
    r = np.abs(u) ** 2
    if spec.kind == "cgl" and "dissipative" in parts and spec.gamma_R:
        out -= spec.gamma_R * smoothed_power(r, spec.exp_p, spec.smoothing_radius) * u
    if "hamiltonian" in parts and spec.gamma_I:
        out -= 1j * spec.gamma_I * smoothed_power(r, spec.exp_q, spec.smoothing_radius) * u
    return out


def laplacian_matrix(basis):
    """Matrix of ``Psi Lap Psi^{-1}`` on the retained modes (real symmetric)."""
    check_is_fitted(basis)
    cached = getattr(basis, "_laplacian_matrix", None)
    if cached is None:
        grid = basis.grid_
        z = basis.eigenvectors_
        lap = np.real(grid.laplacian(z.reshape((-1,) + grid.shape))).reshape(z.shape)
        cached = basis.quadrature_weight_ * z @ lap.T
        cached = 0.5 * (cached + cached.T)
        basis._laplacian_matrix = cached
    return cached


def eval_P(v, spec, basis, parts=PARTS):
    """Perturbation in mode coordinates, ``Psi(P(Psi^{-1} v))``; batches over leading axes."""
    v = np.asarray(v, dtype=complex)
    if spec.kind == "zero":
        return np.zeros_like(v)
    if spec.kind == "custom":
        return mode_transform(eval_field_rhs(mode_inverse(v, basis), spec, basis.grid_), basis)
    out = np.zeros_like(v)
    if spec.kind == "cgl" and "linear" in parts and spec.include_laplacian_dissipation:
        out = v @ laplacian_matrix(basis)
    nonlinear = tuple(p for p in parts if p != "linear")
    if (spec.kind == "cgl" and spec.gamma_R and "dissipative" in nonlinear) or (
        spec.gamma_I and "hamiltonian" in nonlinear
    ):
        u = mode_inverse(v, basis)
        out = out + mode_transform(eval_field_rhs(u, spec, basis.grid_, parts=nonlinear), basis)
    return out


def pairing(a, b):
    """Real scalar product ``Re a conj(b)`` on complex numbers, componentwise."""
    return np.real(a * np.conj(b))


def eval_F(v, spec, basis):
    """Action field ``F_k = (v_k, P_k(v))``."""
    v = np.asarray(v, dtype=complex)
    return pairing(v, eval_P(v, spec, basis))


def eval_G(v, spec, basis, floor):
    """Angle correction ``G_k = (P_k, i v_k) / |v_k|^2`` where ``I_k >= floor``.

    Components below the floor are returned masked.
    """
    if not floor > 0:
        raise DomainError("floor must be positive")
    v = np.asarray(v, dtype=complex)
    P = eval_P(v, spec, basis)
    I = 0.5 * np.abs(v) ** 2
    mask = I < floor
    safe = np.where(mask, 1.0, np.abs(v) ** 2)
    G = pairing(P, 1j * v) / safe
    return np.ma.masked_array(np.where(mask, 0.0, G), mask=mask)


def dissipative_energy(u, spec, grid):
    """``H(u) = int Fp(|u|^2) dx`` with ``Fp' = f_p / 2``, so that ``grad H = f_p(|u|^2) u``."""
    r = np.abs(np.asarray(u)) ** 2
    density = 0.5 * smoothed_power_primitive(r, spec.exp_p, spec.smoothing_radius)
    axes = tuple(range(-grid.dim, 0))
    return grid.weight * np.sum(density, axis=axes)
