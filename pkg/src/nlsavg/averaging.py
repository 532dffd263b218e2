"""Angle averages on the truncated torus ``T^M`` and the effective vector field.

Three estimators are available:

* tensor-product rectangle quadrature (exact for trigonometric polynomials of
  degree below the node count in each angle),
* seeded Monte Carlo with deterministic sub-streams,
* closed forms for the CGL family with exponents 0 or 1.

For the effective field ``R(v) = int Phi_{-theta} P(Phi_theta v) dtheta`` the
component ``R_k`` vanishes whenever ``v_k = 0``: ``P_k(Phi_theta v)`` does not
depend on ``theta_k`` and the outer factor ``exp(-i theta_k)`` integrates to
zero. Quadrature therefore only runs over the angles of nonzero modes.
"""
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_mode_vector
from .action_angle import lift, rotate
from .exceptions import ConfigurationError
from .fields import PARTS, eval_P, laplacian_matrix, pairing

TWO_PI = 2.0 * np.pi
MC_CHUNK = 1024
MAX_TENSOR_ANGLES = 4
DEFAULT_NODES = 8
DEFAULT_SAMPLES = 4096


@dataclass
class AverageEstimate:
    value: np.ndarray
    std_error: np.ndarray
    samples: int
    method: str

    def __post_init__(self):
        self.value = np.asarray(self.value)
        self.std_error = np.asarray(self.std_error, dtype=float)
        if self.samples < 1:
            raise ValueError("an average needs at least one sample")


def _apply(f, vs, batched):
    if batched:
        return np.asarray(f(vs))
    return np.array([f(row) for row in vs])


def tensor_nodes(n_angles, nodes_per_angle):
    """All points of the uniform ``nodes_per_angle``-point grid on ``T^n_angles``."""
    ticks = TWO_PI * np.arange(nodes_per_angle) / nodes_per_angle
    return np.array(list(itertools.product(ticks, repeat=n_angles))).reshape(-1, n_angles)


def partial_average(f, v, N, nodes_per_angle=DEFAULT_NODES, batched=False):
    """Average of ``f`` over rotations of the first ``N`` angles only.

    ``f`` maps a mode vector to a scalar or array; with ``batched=True`` it
    is called once on a stack of rotated vectors.
    """
    v = check_mode_vector(v)
    M = v.shape[0]
    if N < 1 or N > min(M, MAX_TENSOR_ANGLES):
        raise ConfigurationError(
            f"tensor quadrature over {N} angles is outside the budget (<= min(M, {MAX_TENSOR_ANGLES})); use Monte Carlo"
        )
    if nodes_per_angle < 4:
        raise ConfigurationError("nodes_per_angle must be at least 4")
    theta = np.zeros((nodes_per_angle**N, M))
    theta[:, :N] = tensor_nodes(N, nodes_per_angle)
    values = _apply(f, rotate(v, theta), batched)
    mean = values.mean(axis=0)
    return AverageEstimate(mean, np.zeros(np.shape(mean)), values.shape[0], "tensor_quadrature")


def mc_angle_chunks(M, samples, seed):
    """Deterministic angle draws split into fixed-size chunks.

    The chunking depends only on ``samples``, so any later partition of the
    chunks between workers gives the same draws.
    """
    n_chunks = -(-samples // MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for i, child in enumerate(children):
        size = min(MC_CHUNK, samples - i * MC_CHUNK)
        yield TWO_PI * np.random.default_rng(child).random((size, M))


def _summarise(values, method):
    n = values.shape[0]
    mean = values.mean(axis=0)
    if np.iscomplexobj(values):
        var = values.real.var(axis=0, ddof=1) + values.imag.var(axis=0, ddof=1)
    else:
        var = values.var(axis=0, ddof=1)
    return AverageEstimate(mean, np.sqrt(var / n), n, method)


def full_average_mc(f, v, samples=DEFAULT_SAMPLES, seed=0, batched=False, n_jobs=1):
    """Monte-Carlo average of ``f(Phi_theta v)`` with ``theta`` uniform on ``T^M``."""
    v = check_mode_vector(v)
    if samples < 16:
        raise ConfigurationError("Monte Carlo averaging needs at least 16 samples")

    def run(theta):
        return _apply(f, rotate(v, theta), batched)

    chunks = list(mc_angle_chunks(v.shape[0], samples, seed))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return _summarise(np.concatenate(parts, axis=0), "monte_carlo")


def quartic_overlaps(basis):
    """``T_jk = int zeta_j^2 zeta_k^2 dx`` (cached on the basis)."""
    cached = getattr(basis, "_quartic_overlaps", None)
    if cached is None:
        sq = basis.eigenvectors_**2
        cached = basis.quadrature_weight_ * sq @ sq.T
        basis._quartic_overlaps = cached
    return cached


def cgl_effective_linear(basis, potential=None):
    """Diagonal of the averaged Laplacian part: ``-lambda_k + <V zeta_k, zeta_k>``."""
    if potential is not None and potential is not basis.potential_:
        z = basis.eigenvectors_
        m_k = basis.quadrature_weight_ * np.einsum("kx,x,kx->k", z, potential.values.ravel(), z)
    else:
        m_k = basis.potential_expectations()
    return -basis.eigenvalues_ + m_k


def has_closed_form(spec):
    if spec.kind == "zero":
        return True
    if spec.kind not in ("cgl", "cubic_hamiltonian"):
        return False
    exps = []
    if spec.kind == "cgl" and spec.gamma_R:
        exps.append(spec.exp_p)
    if spec.gamma_I:
        exps.append(spec.exp_q)
    return all(e in (0, 1) for e in exps)


def _power_average(v, exponent, basis):
    """Averaged ``Psi(f(|u|^2) u)`` for ``f(r) = r^exponent`` with exponent 0 or 1."""
    if exponent == 0:
        return v.copy()
    T = quartic_overlaps(basis)
    a = np.abs(v) ** 2
    return v * (2.0 * (a @ T) - a * np.diagonal(T))


def cgl_effective_closed_form(v, spec, basis, parts=PARTS):
    """Exact ``R(v)`` for CGL with exponents in {0, 1}.

    For the cubic term, averaging ``sum v_i v_j conj(v_l) T_ijlk`` over the torus
    keeps the pairings ``{i, j} = {l, k}``, which gives
    ``v_k (2 sum_j |v_j|^2 T_jk - |v_k|^2 T_kk)``.
    """
    if not has_closed_form(spec):
        raise ConfigurationError(f"no closed-form effective field for {spec}")
    v = np.asarray(v, dtype=complex)
    out = np.zeros_like(v)
    if spec.kind == "zero":
        return out
    if spec.kind == "cgl" and "linear" in parts and spec.include_laplacian_dissipation:
        out += np.diagonal(laplacian_matrix(basis)) * v
    if spec.kind == "cgl" and "dissipative" in parts and spec.gamma_R:
        out -= spec.gamma_R * _power_average(v, spec.exp_p, basis)
    if "hamiltonian" in parts and spec.gamma_I:
        out -= 1j * spec.gamma_I * _power_average(v, spec.exp_q, basis)
    return out


def _rotated_P(v, spec, basis, theta, parts):
    rotated = rotate(v, theta)
    return rotate(eval_P(rotated, spec, basis, parts=parts), -theta)


def effective_field(v, spec, basis, method="auto", budget=None, seed=0, parts=PARTS):
    """Effective field ``R(v)``, the torus average of ``Phi_{-theta} P(Phi_theta v)``.

    Parameters
    ----------
    method : {"auto", "closed_form", "quadrature", "monte_carlo"}
        ``auto`` prefers the closed form, then quadrature when at most three
        modes are nonzero, then Monte Carlo.
    budget : int, optional
        Nodes per angle for quadrature (default 8) or sample count for Monte
        Carlo (default 4096).

    Returns
    -------
    AverageEstimate
        ``value`` holds ``R(v)``.
    """
    v = check_mode_vector(v, basis.n_modes_)
    active = np.flatnonzero(v)
    if method == "auto":
        if has_closed_form(spec):
            method = "closed_form"
        elif len(active) <= 3:
            method = "quadrature"
        else:
            method = "monte_carlo"

    if method == "closed_form":
        R = cgl_effective_closed_form(v, spec, basis, parts=parts)
        return AverageEstimate(R, np.zeros(R.shape), 1, "closed_form")

    if method == "quadrature":
        nodes = DEFAULT_NODES if budget is None else int(budget)
        if len(active) > MAX_TENSOR_ANGLES:
            raise ConfigurationError(
                f"{len(active)} active angles exceed the tensor-quadrature budget of {MAX_TENSOR_ANGLES}"
            )
        if nodes < 4:
            raise ConfigurationError("nodes_per_angle must be at least 4")
        R = np.zeros_like(v)
        if len(active):
            theta = np.zeros((nodes ** len(active), v.shape[0]))
            theta[:, active] = tensor_nodes(len(active), nodes)
            vals = _rotated_P(v, spec, basis, theta, parts)
            R[active] = vals[:, active].mean(axis=0)
        return AverageEstimate(R, np.zeros(R.shape), nodes ** max(len(active), 1), "tensor_quadrature")

    if method == "monte_carlo":
        samples = DEFAULT_SAMPLES if budget is None else int(budget)
        return _mc_effective(v, spec, basis, samples, seed, parts)

    raise ConfigurationError(f"unknown averaging method {method!r}")


def _mc_effective(v, spec, basis, samples, seed, parts):
    if samples < 16:
        raise ConfigurationError("Monte Carlo averaging needs at least 16 samples")
    chunks = [_rotated_P(v, spec, basis, theta, parts) for theta in mc_angle_chunks(v.shape[0], samples, seed)]
    return _summarise(np.concatenate(chunks, axis=0), "monte_carlo")


def averaged_action_field(v, spec, basis, method="auto", budget=None, seed=0):
    """``<F_k>(I(v)) = (v_k, R_k(v))``; the value depends on ``v`` only through its actions."""
    v = np.asarray(v, dtype=complex)
    est = effective_field(v, spec, basis, method=method, budget=budget, seed=seed)
    err = np.abs(v) * est.std_error
    return AverageEstimate(pairing(v, est.value), err, est.samples, est.method)


def averaged_action_field_of_actions(I, spec, basis, method="auto", budget=None, seed=0):
    """``<F>(I)`` evaluated at the zero-angle lift of ``I``."""
    I = np.asarray(I, dtype=float)
    return averaged_action_field(lift(I, np.zeros_like(I)), spec, basis, method, budget, seed)


def verify_r3_null(v, spec, basis, budget=None, seed=0, method="quadrature"):
    """Largest ``|(v_k, R3_k(v))|`` where ``R3`` averages the Hamiltonian part alone."""
    if spec.kind != "cgl":
        raise ConfigurationError("the Hamiltonian-part check applies to the cgl family")
    v = check_mode_vector(v, basis.n_modes_)
    if spec.gamma_I == 0:
        return 0.0
    est = effective_field(v, spec, basis, method=method, budget=budget, seed=seed, parts=("hamiltonian",))
    return float(np.max(np.abs(pairing(v, est.value))))
