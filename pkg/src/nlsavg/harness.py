"""Experiment orchestration: configs, resonance scans, Weyl averages and epsilon sweeps."""
import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .action_angle import action_norm
from .exceptions import ConfigurationError, IntegrationError
from .fields import NonlinearitySpec
from .dynamics import IntegratorConfig, integrate_effective, integrate_perturbed, residual_xi
from .spectral import Grid, Potential, SpectralBasis, assemble_operator

SEED_ENV = "NLSAVG_SEED"
MAX_ENUMERATION = 7**8
STUDY_COLUMNS = ("epsilon", "sup_err_q0", "sup_err_q1", "sup_xi", "wallclock_s")

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["grid", "potential", "truncation"],
    "properties": {
        "grid": {
            "type": "object",
            "required": ["dim", "N"],
            "properties": {"dim": {"enum": [1, 2]}, "N": {"type": "integer", "minimum": 8}},
        },
        "potential": {"type": "object", "required": ["kind"]},
        "truncation": {"type": "integer", "minimum": 1},
        "nonlinearity": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["cgl", "cubic_hamiltonian", "zero"]},
                "gamma_R": {"type": "number", "minimum": 0},
                "gamma_I": {"type": "number", "minimum": 0},
                "exp_p": {"type": "number", "minimum": 0},
                "exp_q": {"type": "number", "minimum": 0},
                "smoothing_radius": {"type": "number", "minimum": 0},
                "include_laplacian_dissipation": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["mode", "modes", "random"]},
                "mode": {"type": "integer", "minimum": 1},
                "coefficient": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "re": {"type": "array", "items": {"type": "number"}},
                "im": {"type": "array", "items": {"type": "number"}},
                "n_active": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "l2_norm": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "integrator": {
            "type": "object",
            "properties": {
                "dt_slow": {"type": "number", "exclusiveMinimum": 0},
                "T_slow": {"type": "number", "exclusiveMinimum": 0},
                "scheme": {"enum": ["strang_exact_phase", "etd_rk2"]},
                "record_every": {"type": ["integer", "null"], "minimum": 1},
                "blowup_threshold": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "epsilon_sweep": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "minItems": 1,
        },
        "comparison_q": {"type": "number"},
        "averaging": {
            "type": "object",
            "properties": {
                "method": {"enum": ["auto", "closed_form", "quadrature", "monte_carlo"]},
                "budget": {"type": ["integer", "null"], "minimum": 1},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "resonance": {
            "type": "object",
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "S": {"type": "integer", "minimum": 1},
                "tol": {"type": "number"},
            },
        },
        "weyl": {
            "type": "object",
            "required": ["frequencies", "terms", "T_values"],
            "properties": {
                "frequencies": {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 4},
                "terms": {"type": "array", "items": {"type": "object", "required": ["k", "c"]}},
                "x0": {"type": "array", "items": {"type": "number"}},
                "T_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}},
        "smoothness_n": {"type": ["integer", "null"]},
        "threads": {"type": "integer", "minimum": 1},
    },
}

DEFAULTS = {
    "nonlinearity": {},
    "initial": {"kind": "mode", "mode": 1, "coefficient": [1.0, 1.0], "l2_norm": 1.0},
    "integrator": {},
    "epsilon_sweep": [0.2, 0.1, 0.05, 0.025],
    "comparison_q": 0,
    "averaging": {"method": "auto", "budget": None, "seed": 0},
    "resonance": {"K": 6, "S": 3, "tol": 1e-6},
    "output": {"dir": "out"},
    "smoothness_n": None,
    "threads": 1,
}


def reference_config():
    """The reference CGL set-up used by the convergence study and the acceptance suite.

    ``V = 2 + 0.5 cos x + 0.3 sin 2x`` on a 64-point grid, 16 modes, cubic
    nonlinearity with ``gamma_R = gamma_I = 1``, initial datum ``(1+i) zeta_1``
    normalised to unit L2 norm.
    """
    return {
        "grid": {"dim": 1, "N": 64},
        "potential": {
            "kind": "trig",
            "offset": 2.0,
            "terms": [{"k": [1], "cos": 0.5, "sin": 0.0}, {"k": [2], "cos": 0.0, "sin": 0.3}],
        },
        "truncation": 16,
        "nonlinearity": {"kind": "cgl", "gamma_R": 1.0, "gamma_I": 1.0, "exp_p": 1.0, "exp_q": 1.0},
        "initial": {"kind": "mode", "mode": 1, "coefficient": [1.0, 1.0], "l2_norm": 1.0},
        "integrator": {"dt_slow": 1.0 / 2048, "T_slow": 1.0, "scheme": "strang_exact_phase"},
        "epsilon_sweep": [0.2, 0.1, 0.05, 0.025],
        "comparison_q": 0,
        "averaging": {"method": "auto", "budget": None, "seed": 0},
    }


@dataclass
class SimulationConfig:
    """Resolved, validated run configuration."""

    raw: dict
    grid: Grid
    potential: Potential
    truncation: int
    spec: NonlinearitySpec
    integrator: dict
    epsilon_sweep: list
    comparison_q: float
    averaging: dict
    output_dir: str
    threads: int = 1
    smoothness_n: object = None
    _basis: SpectralBasis = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, doc):
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigurationError(f"config schema error at {path}: {exc.message}") from exc
        merged = copy.deepcopy(DEFAULTS)
        for key, value in doc.items():
            merged[key] = copy.deepcopy(value)
        sweep = [float(e) for e in merged["epsilon_sweep"]]
        if any(b >= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigurationError("epsilon_sweep must be strictly decreasing")
        grid = Grid(int(merged["grid"]["dim"]), int(merged["grid"]["N"]))
        potential = Potential.from_description(grid, merged["potential"], merged["potential"].get("values"))
        spec = NonlinearitySpec.from_dict(merged["nonlinearity"])
        IntegratorConfig(**merged["integrator"])
        return cls(
            raw=merged,
            grid=grid,
            potential=potential,
            truncation=int(merged["truncation"]),
            spec=spec,
            integrator=dict(merged["integrator"]),
            epsilon_sweep=sweep,
            comparison_q=float(merged["comparison_q"]),
            averaging=dict(DEFAULTS["averaging"], **merged["averaging"]),
            output_dir=merged["output"].get("dir", "out"),
            threads=int(merged.get("threads", 1)),
            smoothness_n=merged.get("smoothness_n"),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @property
    def basis(self):
        if self._basis is None:
            self._basis = assemble_operator(self.potential, self.grid, self.truncation)
        return self._basis

    def integrator_config(self, epsilon=None):
        eps = self.epsilon_sweep[0] if epsilon is None else epsilon
        return IntegratorConfig(epsilon=float(eps), **self.integrator)

    def initial_modes(self):
        """``v0 = Psi(u0)`` built from the ``initial`` section."""
        init = self.raw["initial"]
        M = self.truncation
        kind = init["kind"]
        if kind == "mode":
            k = int(init.get("mode", 1))
            if k > M:
                raise ConfigurationError(f"initial mode {k} exceeds truncation {M}")
            re, im = init.get("coefficient", [1.0, 0.0])
            v0 = np.zeros(M, dtype=complex)
            v0[k - 1] = complex(re, im)
        elif kind == "modes":
            re = np.asarray(init.get("re", []), dtype=float)
            im = np.asarray(init.get("im", np.zeros_like(re)), dtype=float)
            if re.shape != (M,) or im.shape != (M,):
                raise ConfigurationError(f"initial re/im must have length {M}")
            v0 = re + 1j * im
        else:
            rng = np.random.default_rng(init.get("seed", 0))
            n = min(int(init.get("n_active", M)), M)
            v0 = np.zeros(M, dtype=complex)
            v0[:n] = rng.normal(size=n) + 1j * rng.normal(size=n)
            v0[:n] /= (1.0 + np.arange(n)) ** 2
        if "l2_norm" in init:
            norm = np.linalg.norm(v0)
            if norm == 0:
                raise ConfigurationError("cannot rescale a zero initial datum")
            v0 = v0 * (init["l2_norm"] / norm)
        return v0

    def resolved(self):
        out = copy.deepcopy(self.raw)
        out["potential"] = self.potential.description
        out["nonlinearity"] = self.spec.to_dict()
        return out


# ---------------------------------------------------------------- resonances


@dataclass
class ResonanceReport:
    best_vector: np.ndarray
    best_value: float
    K: int
    S: int
    tol: float
    verdict: str

    def to_dict(self):
        return {
            "best_vector": [int(s) for s in self.best_vector],
            "best_value": float(self.best_value),
            "K": self.K,
            "S": self.S,
            "tol": self.tol,
            "verdict": self.verdict,
        }


def resonance_scan(basis, K=6, S=3, tol=1e-6):
    """Exhaustive search for the smallest ``|sum_k s_k lambda_k|`` over ``0 < |s|_inf <= S``.

    ``basis`` is a fitted :class:`SpectralBasis` or a plain array of
    eigenvalues. The verdict is ``resonant`` iff the minimum is ``<= tol``;
    a finite scan can never certify non-resonance beyond its bounds.
    """
    lam = np.asarray(basis.eigenvalues_ if hasattr(basis, "eigenvalues_") else basis, dtype=float)
    if K > lam.shape[0]:
        raise ConfigurationError(f"K={K} exceeds the {lam.shape[0]} available eigenvalues")
    if K < 1 or S < 1:
        raise ConfigurationError("K and S must be positive")
    width = 2 * S + 1
    if width**K > MAX_ENUMERATION:
        raise ConfigurationError(f"(2S+1)^K = {width**K} exceeds the enumeration budget {MAX_ENUMERATION}")
    steps = np.arange(-S, S + 1)
    sums = np.zeros(1)
    for k in range(K):
        sums = (sums[:, None] + steps * lam[k]).ravel()
    values = np.abs(sums)
    # all-zero vector sits at the centre of the enumeration
    values[(width**K) // 2] = np.inf
    idx = int(np.argmin(values))
    s = np.array(np.unravel_index(idx, (width,) * K)) - S
    best = float(values[idx])
    verdict = "resonant" if best <= tol else "non_resonant_at_tolerance"
    return ResonanceReport(s, best, K, S, tol, verdict)


# ------------------------------------------------------------ Weyl averages


@dataclass
class TrigPolynomial:
    """``f(x) = Re sum_k c_k exp(i k.x)`` on ``T^n``."""

    terms: dict

    @property
    def n(self):
        return len(next(iter(self.terms)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1], dtype=complex)
        for k, c in self.terms.items():
            total += c * np.exp(1j * (x @ np.asarray(k, dtype=float)))
        return total.real

    @property
    def haar_average(self):
        zero = (0,) * self.n
        return float(np.real(self.terms.get(zero, 0.0)))

    def time_average_exact(self, omega, x0, T):
        """Closed-form ``(1/T) int_0^T f(x0 + omega t) dt``."""
        omega = np.asarray(omega, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        total = 0.0 + 0.0j
        for k, c in self.terms.items():
            k = np.asarray(k, dtype=float)
            rate = float(k @ omega)
            phase = np.exp(1j * float(k @ x0))
            if rate == 0.0:
                total += c * phase
            else:
                total += c * phase * (np.exp(1j * rate * T) - 1.0) / (1j * rate * T)
        return float(total.real)

    @classmethod
    def from_terms(cls, items):
        terms = {}
        for item in items:
            c = item["c"]
            c = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
            terms[tuple(int(k) for k in item["k"])] = c
        return cls(terms)


def time_average(f, omega, x0, T, nodes=16):
    """``(1/T) int_0^T f(x0 + omega t) dt`` by panelled Gauss-Legendre quadrature.

    Panels are short enough that the fastest term of ``f`` turns by at most
    ``pi/2`` across each one.
    """
    omega = np.asarray(omega, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    rate = max((abs(float(np.dot(k, omega))) for k in f.terms), default=0.0)
    n_panels = max(1, int(math.ceil(T * rate / (0.5 * np.pi))))
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, T, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * gx).ravel()
    w = (half[:, None] * gw).ravel()
    return float(np.dot(w, f(x0 + t[:, None] * omega)) / T)


def weyl_average_test(frequencies, f, x0, T_values):
    """Gap between time averages along ``x0 + omega t`` and the Haar average, per ``T``."""
    omega = np.asarray(frequencies, dtype=float)
    if omega.shape[0] > 4:
        raise ConfigurationError("Weyl test supports at most 4 frequencies")
    if f.n != omega.shape[0]:
        raise ConfigurationError("trig polynomial dimension does not match the frequency vector")
    haar = f.haar_average
    rows = []
    for T in T_values:
        avg = time_average(f, omega, x0, float(T))
        rows.append({"T": float(T), "time_average": avg, "haar_average": haar, "gap": abs(avg - haar)})
    return rows


# --------------------------------------------------------- epsilon sweeps


class StudyFailure(IntegrationError):
    def __init__(self, message, epsilon=None):
        super().__init__(message)
        self.epsilon = epsilon


@dataclass
class StudyResult:
    rows: list
    effective: object
    config: dict
    comparison_q: float
    effective_wallclock_s: float = 0.0

    @property
    def errors(self):
        return np.array([r["sup_err_q"] for r in self.rows])

    @property
    def sup_xi(self):
        return np.array([r["sup_xi"] for r in self.rows])

    def summary(self):
        errs = self.errors
        xi = self.sup_xi
        monotone = bool(np.all(np.diff(errs) < 0)) if len(errs) > 1 else None
        xi_monotone = bool(np.all(np.diff(xi) < 0)) if len(xi) > 1 else None
        ratio = float(errs[-1] / errs[0]) if len(errs) > 1 and errs[0] > 0 else None
        return {
            "config": self.config,
            "comparison_q": self.comparison_q,
            "rows": [{k: r[k] for k in STUDY_COLUMNS + ("sup_err_q",)} for r in self.rows],
            "error_strictly_decreasing": monotone,
            "xi_strictly_decreasing": xi_monotone,
            "error_ratio_last_first": ratio,
            "effective_wallclock_s": self.effective_wallclock_s,
        }

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "study.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(STUDY_COLUMNS)
            for r in self.rows:
                writer.writerow([f"{r[c]:.17g}" for c in STUDY_COLUMNS])
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def convergence_study(config, threads=None, xi_only=False):
    """Compare perturbed action curves with the effective prediction along an epsilon sweep.

    For every ``eps`` the table holds ``sup_tau |I(v^eps) - I^0|~_q`` for
    ``q = 0, 1`` and for ``config.comparison_q``, plus ``sup |Xi|``.
    With ``xi_only`` the effective solve is skipped and the error columns are NaN.
    """
    basis = config.basis
    v0 = config.initial_modes()
    avg = config.averaging
    reference = None
    eff_wall = 0.0
    if not xi_only:
        eff = integrate_effective(v0, config.spec, basis, config.integrator_config(), avg["method"], avg["budget"], avg["seed"])
        if eff.diverged:
            raise StudyFailure("effective run diverged before T_slow", epsilon=None)
        reference = eff
        eff_wall = eff.wallclock_s

    def one(eps):
        start = time.perf_counter()
        traj = integrate_perturbed(v0, config.spec, basis, config.integrator_config(eps))
        if traj.diverged:
            raise StudyFailure(f"perturbed run diverged at epsilon={eps}", epsilon=eps)
        xi = residual_xi(traj, config.spec, basis, avg["method"], avg["budget"], avg["seed"])
        row = {"epsilon": float(eps), "sup_xi": float(np.max(np.abs(xi)))}
        if reference is not None:
            if traj.times.shape != reference.times.shape or not np.allclose(traj.times, reference.times):
                raise StudyFailure("perturbed and effective record grids differ", epsilon=eps)
            diff = traj.actions - reference.actions
            row["sup_err_q0"] = float(np.max(action_norm(diff, basis, 0)))
            row["sup_err_q1"] = float(np.max(action_norm(diff, basis, 1)))
            row["sup_err_q"] = float(np.max(action_norm(diff, basis, config.comparison_q)))
        else:
            row.update(sup_err_q0=float("nan"), sup_err_q1=float("nan"), sup_err_q=float("nan"))
        row["wallclock_s"] = time.perf_counter() - start
        return row

    n_threads = config.threads if threads is None else threads
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(one, config.epsilon_sweep))
    else:
        rows = [one(eps) for eps in config.epsilon_sweep]
    return StudyResult(rows, reference, config.resolved(), config.comparison_q, eff_wall)


def default_seed(fallback=0):
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else fallback

