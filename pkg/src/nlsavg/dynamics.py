"""Slow-time integration of the perturbed and effective equations.

The perturbed system in slow time ``tau = eps t`` reads

    dv_k/dtau = -i eps^{-1} lambda_k v_k + P_k(v),

and the effective system ``dv/dtau = R(v)``. Both have a diagonal linear part
that is advanced exactly; the rest is handled by an explicit second-order
rule, either Strang splitting around a Heun step or Cox-Matthews ETD2RK.
"""
import csv
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_mode_vector
from .action_angle import actions
from .averaging import averaged_action_field, cgl_effective_linear, effective_field, has_closed_form
from .exceptions import ConfigurationError, DomainError, IntegrationError
from .fields import PARTS, eval_P, laplacian_matrix, smoothed_power
from .spectral import hp_norm, mode_inverse

SCHEMES = ("strang_exact_phase", "etd_rk2")
NORM_ORDERS = (0, 1, 2)


@dataclass
class IntegratorConfig:
    dt_slow: float = 1e-3
    T_slow: float = 1.0
    epsilon: float = 0.1
    scheme: str = "strang_exact_phase"
    record_every: Optional[int] = None
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if not self.dt_slow > 0:
            raise ConfigurationError("dt_slow must be positive")
        if not self.T_slow > 0:
            raise ConfigurationError("T_slow must be positive")
        if not 0 < self.epsilon <= 1:
            raise ConfigurationError("epsilon must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigurationError("record_every must be a positive integer")

    @property
    def n_steps(self):
        return max(1, int(round(self.T_slow / self.dt_slow)))

    @property
    def step(self):
        """Step actually used, ``T_slow / n_steps``."""
        return self.T_slow / self.n_steps

    @property
    def record_stride(self):
        if self.record_every is not None:
            return int(self.record_every)
        # default cadence: 64 records per unit of slow time
        return max(1, int(round(1.0 / (64.0 * self.step))))

    def to_dict(self):
        return asdict(self)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    norms: dict
    diagnostics: dict = field(default_factory=dict)
    diverged: bool = False
    config: dict = field(default_factory=dict)
    wallclock_s: float = 0.0

    @property
    def final_state(self):
        return self.states[-1]

    def to_csv(self, path):
        """Long-format CSV: one row per (record, mode)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "k", "re_v", "im_v", "action"])
            for t, v, I in zip(self.times, self.states, self.actions):
                for k in range(v.shape[0]):
                    writer.writerow([f"{t:.17g}", k + 1, f"{v[k].real:.17g}", f"{v[k].imag:.17g}", f"{I[k]:.17g}"])

    def sidecar(self):
        return {
            "config": self.config,
            "diverged": bool(self.diverged),
            "n_records": int(len(self.times)),
            "norms": {f"h{p}": np.asarray(n).tolist() for p, n in self.norms.items()},
            "diagnostics": {k: np.asarray(val).tolist() for k, val in self.diagnostics.items()},
        }

    def write(self, csv_path, json_path):
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2)


def phi_functions(z, n_contour=32):
    """``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2`` by contour averaging.

    Averaging over a unit circle around each ``z`` avoids the cancellation of
    the direct formulas near ``z = 0``.
    """
    z = np.asarray(z, dtype=complex)
    circ = np.exp(2j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    zc = z[..., None] + circ
    phi1 = np.mean((np.exp(zc) - 1.0) / zc, axis=-1)
    phi2 = np.mean((np.exp(zc) - 1.0 - zc) / zc**2, axis=-1)
    # the contour mean is accurate for |z| not much larger than the radius
    big = np.abs(z) > 0.5
    zb = np.where(big, z, 1.0)
    phi1 = np.where(big, (np.exp(zb) - 1.0) / zb, phi1)
    phi2 = np.where(big, (np.exp(zb) - 1.0 - zb) / zb**2, phi2)
    return phi1, phi2


class _Stepper:
    """Steps of ``v' = L v + N(v)`` with diagonal ``L``.

    When ``L`` is purely imaginary the stepper works with ``w = exp(-L tau) v``
    and only adds the nonlinear increments to ``w``; the phase is rebuilt from
    ``tau = n h`` at every step. Rounding in ``|exp(L h)|`` then cannot
    accumulate, and a vanishing ``N`` leaves every ``|v_k|`` exactly fixed.
    The update is algebraically the same scheme as in the direct form.
    """

    def __init__(self, linear, nonlinear, h, scheme):
        self.N = nonlinear
        self.h = h
        self.scheme = scheme
        self.L = np.asarray(linear, dtype=complex)
        self.phase_only = bool(np.all(self.L.real == 0))
        self._w = None
        z = self.L * h
        if scheme == "strang_exact_phase":
            self.half = np.exp(0.5 * z)
        else:
            self.full = np.exp(z)
            phi1, phi2 = phi_functions(z)
            self.c1 = h * phi1
            self.c2 = h * phi2

    def __call__(self, v, n):
        """Advance ``v = v(t_{n-1})`` to ``t_n``."""
        if not self.phase_only:
            return self._direct(v)
        if n == 1 or self._w is None:
            self._w = np.asarray(v, dtype=complex).copy()
        N, h, w = self.N, self.h, self._w
        if self.scheme == "strang_exact_phase":
            E = np.exp(self.L * ((n - 0.5) * h))
            x = E * w
            k1 = N(x)
            k2 = N(x + h * k1)
            w = w + np.conj(E) * (0.5 * h * (k1 + k2))
        else:
            E = np.exp(self.L * (n * h))
            n0 = N(np.exp(self.L * ((n - 1) * h)) * w)
            a = E * w + self.c1 * n0
            w = w + np.conj(E) * (self.c1 * n0 + self.c2 * (N(a) - n0))
        self._w = w
        return np.exp(self.L * (n * h)) * w

    def _direct(self, v):
        N, h = self.N, self.h
        if self.scheme == "strang_exact_phase":
            w = self.half * v
            k1 = N(w)
            k2 = N(w + h * k1)
            w = w + 0.5 * h * (k1 + k2)
            return self.half * w
        n0 = N(v)
        a = self.full * v + self.c1 * n0
        return a + self.c2 * (N(a) - n0)


def _run(v0, stepper, basis, cfg, label, extra_config):
    start = time.perf_counter()
    v = v0.copy()
    stride = cfg.record_stride
    h = cfg.step
    times, states = [0.0], [v0.copy()]
    diverged = float(hp_norm(v0, basis, 2)) >= cfg.blowup_threshold
    if not diverged:
        for n in range(1, cfg.n_steps + 1):
            try:
                v = stepper(v, n)
            except DomainError as exc:
                raise IntegrationError(f"{label}: {exc} at step {n} (tau={n * h:.6g})") from exc
            if not np.all(np.isfinite(v)):
                raise IntegrationError(f"{label}: non-finite state at step {n} (tau={n * h:.6g})")
            blown = float(hp_norm(v, basis, 2)) >= cfg.blowup_threshold
            if n % stride == 0 or n == cfg.n_steps or blown:
                times.append(n * h)
                states.append(v.copy())
            if blown:
                diverged = True
                break
    states = np.array(states)
    record = TrajectoryRecord(
        times=np.array(times),
        states=states,
        actions=actions(states),
        norms={p: hp_norm(states, basis, p) for p in NORM_ORDERS},
        diagnostics={"mass": hp_norm(states, basis, 0) ** 2},
        diverged=bool(diverged),
        config={"kind": label, **cfg.to_dict(), **extra_config},
    )
    record.wallclock_s = time.perf_counter() - start
    return record


def integrate_perturbed(v0, spec, basis, cfg):
    """Integrate the Galerkin-truncated perturbed equation on ``[0, T_slow]``.

    The ``-i lambda / eps`` rotation is applied exactly, so the step size only
    has to resolve the perturbation. A run whose ``|v|_2`` reaches
    ``cfg.blowup_threshold`` stops early with ``diverged=True``.
    """
    v0 = check_mode_vector(v0, basis.n_modes_, name="v0")
    linear = -1j * basis.eigenvalues_ / cfg.epsilon
    stepper = _Stepper(linear, lambda w: eval_P(w, spec, basis), cfg.step, cfg.scheme)
    return _run(v0, stepper, basis, cfg, "perturbed", {"spec": spec.to_dict()})


def effective_rhs(spec, basis, method="auto", budget=None, seed=0, hamiltonian_part=False):
    """Split ``R`` into an exactly solvable diagonal and an explicit remainder.

    For the CGL family the diagonal is ``-lambda_k + <V zeta_k, zeta_k>`` and the
    remainder is the averaged dissipative term; the averaged Hamiltonian term
    only rotates phases and is dropped unless ``hamiltonian_part`` is set.
    """
    linear = np.zeros(basis.n_modes_, dtype=complex)
    parts = PARTS
    if spec.kind == "cgl":
        if spec.include_laplacian_dissipation:
            linear = cgl_effective_linear(basis).astype(complex)
        parts = ("dissipative", "hamiltonian") if hamiltonian_part else ("dissipative",)
    if method == "auto" and not has_closed_form(spec):
        method = "monte_carlo"

    def remainder(v):
        if not parts:
            return np.zeros_like(v)
        return effective_field(v, spec, basis, method=method, budget=budget, seed=seed, parts=parts).value

    return linear, remainder


def integrate_effective(v0, spec, basis, cfg, method="auto", budget=None, seed=0, hamiltonian_part=False):
    """Integrate ``dv/dtau = R(v)`` with the same recording conventions.

    ``cfg.epsilon`` is unused by the dynamics and kept only for bookkeeping.
    """
    v0 = check_mode_vector(v0, basis.n_modes_, name="v0")
    linear, remainder = effective_rhs(spec, basis, method, budget, seed, hamiltonian_part)
    stepper = _Stepper(linear, remainder, cfg.step, cfg.scheme)
    extra = {"spec": spec.to_dict(), "averaging": {"method": method, "budget": budget, "seed": seed}}
    return _run(v0, stepper, basis, cfg, "effective", extra)


def averaged_actions(traj):
    """The curve ``I^0(tau)`` of an effective trajectory, one row per record."""
    return np.asarray(traj.actions)


def cumulative_trapezoid(y, t):
    y = np.asarray(y)
    out = np.zeros_like(y, dtype=float)
    if len(t) > 1:
        dt = np.diff(t)[:, None] if y.ndim > 1 else np.diff(t)
        out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


def residual_xi(traj, spec, basis, avg_method="auto", avg_budget=None, seed=0):
    """``Xi_k(tau) = I_k(tau) - I_k(0) - int_0^tau <F_k>(I(s)) ds`` along a trajectory.

    The averaged field is evaluated at the recorded states (it depends only on
    their actions) and integrated with the trapezoid rule on the record grid.
    """
    F = np.array(
        [averaged_action_field(v, spec, basis, method=avg_method, budget=avg_budget, seed=seed).value for v in traj.states]
    )
    I = np.asarray(traj.actions)
    return I - I[0] - cumulative_trapezoid(F, traj.times)


@dataclass
class DissipationReport:
    times: np.ndarray
    mass: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    residual_times: np.ndarray
    bound: np.ndarray
    bound_ok: np.ndarray
    b2: float

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def l2_balance_rhs(states, spec, basis):
    """Right side of the L2 balance ``d||u||^2/dtau = 2<u, Lap u> - 2 gamma_R int f_p(|u|^2)|u|^2``."""
    states = np.asarray(states, dtype=complex)
    out = np.zeros(states.shape[0])
    if spec.include_laplacian_dissipation:
        out += 2.0 * np.real(np.einsum("nk,kj,nj->n", np.conj(states), laplacian_matrix(basis), states))
    if spec.gamma_R:
        u = mode_inverse(states, basis)
        r = np.abs(u) ** 2
        dens = smoothed_power(r, spec.exp_p, spec.smoothing_radius) * r
        axes = tuple(range(1, u.ndim))
        out -= 2.0 * spec.gamma_R * basis.quadrature_weight_ * np.sum(dens, axis=axes)
    return out


def dissipation_check(traj, spec, basis):
    """Compare the recorded ``||u||_0^2`` with its balance law and the a-priori bound.

    The residual is the centred difference of the mass minus the balance-law
    right side at every interior record. The bound is
    ``||u(tau)||_0 <= min(B2, e^tau ||u_0||_0)`` with ``B2 = gamma_R^(-1/(2p))``.
    """
    if spec.kind != "cgl" or not spec.include_laplacian_dissipation:
        raise ConfigurationError("the L2 balance check needs the cgl family with the Laplacian term")
    t = np.asarray(traj.times)
    mass = hp_norm(traj.states, basis, 0) ** 2
    rhs = l2_balance_rhs(traj.states, spec, basis)
    if len(t) >= 3:
        dmass = (mass[2:] - mass[:-2]) / (t[2:] - t[:-2])
        residual = dmass - rhs[1:-1]
        rtimes = t[1:-1]
    else:
        residual = np.zeros(0)
        rtimes = np.zeros(0)
    b2 = spec.b2
    bound = np.minimum(b2, np.exp(t) * np.sqrt(mass[0]))
    ok = np.sqrt(mass) <= bound + 1e-8
    return DissipationReport(t, mass, rhs, residual, rtimes, bound, ok, b2)
