"""Invariant suite behind ``nlsavg selftest``.

Thresholds come from the packaged ``tolerances.json`` so that pilot-derived
regression values live in one auditable place.
"""
import json
from importlib import resources

import numpy as np

from .action_angle import actions, lift, rotate
from .averaging import averaged_action_field, cgl_effective_linear, effective_field, full_average_mc, verify_r3_null
from .dynamics import IntegratorConfig, dissipation_check, integrate_effective, integrate_perturbed
from .fields import NonlinearitySpec, eval_F
from .harness import SimulationConfig, TrigPolynomial, convergence_study, reference_config, resonance_scan, weyl_average_test
from .spectral import Grid, Potential, apply_operator, assemble_operator, hp_norm, mode_inverse


def load_tolerances():
    with resources.files("nlsavg").joinpath("tolerances.json").open() as fh:
        return json.load(fh)


def _random_modes(rng, M, n=None):
    shape = (M,) if n is None else (n, M)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def check_spectrum(tol):
    basis = assemble_operator(Potential.constant(Grid(1, 128)), truncation=32)
    n = np.arange(0, 17)
    exact = np.sort(np.concatenate([1 + n**2, 1 + n[1:] ** 2]))[:32]
    rel = float(np.max(np.abs(basis.eigenvalues_ - exact) / exact))
    ortho = basis.orthonormality_residual()
    return rel <= tol["spectral_eigenvalue_rel"] and ortho <= tol["orthonormality"], f"rel={rel:.2e} ortho={ortho:.2e}"


def check_norm_identity(tol):
    grid = Grid(1, 64)
    basis = assemble_operator(Potential.trig(grid, 1.5, [{"k": [1], "cos": 0.5}]), truncation=8)
    rng = np.random.default_rng(0)
    worst = 0.0
    for v in _random_modes(rng, 8, 50):
        u = mode_inverse(v, basis)
        for m in (0, 1, 2):
            lhs = hp_norm(v, basis, m) ** 2
            rhs = grid.inner(apply_operator(u, basis, m), u)
            worst = max(worst, abs(lhs - rhs) / lhs)
    return worst <= tol["norm_identity_rel"], f"max rel={worst:.2e}"


def check_linear_conservation(tol):
    basis = assemble_operator(Potential.trig(Grid(1, 64), 1.5, [{"k": [1], "cos": 0.5}]), truncation=8)
    v0 = _random_modes(np.random.default_rng(1), 8)
    traj = integrate_perturbed(v0, NonlinearitySpec.zero(), basis, IntegratorConfig(dt_slow=1e-3, epsilon=0.01))
    drift = float(np.max(np.abs(traj.actions - traj.actions[0])))
    return drift <= tol["linear_action_drift"], f"drift={drift:.2e}"


def _m3_setup():
    grid = Grid(1, 32)
    basis = assemble_operator(Potential.trig(grid, 2.0, [{"k": [1], "cos": 0.5}, {"k": [2], "sin": 0.3}]), truncation=3)
    return basis, NonlinearitySpec()


def check_averaging_identity(tol):
    basis, spec = _m3_setup()
    v = _random_modes(np.random.default_rng(2), 3)
    mc = full_average_mc(lambda vs: eval_F(vs, spec, basis), v, samples=10_000, seed=3, batched=True)
    quad = averaged_action_field(v, spec, basis, method="quadrature").value
    z = np.abs(mc.value - quad) / mc.std_error
    return bool(np.all(z <= tol["mc_standard_errors"])), f"max z={z.max():.2f}"


def check_rotation_equivariance(tol):
    basis, spec = _m3_setup()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10):
        v = _random_modes(rng, 3)
        theta = rng.uniform(0, 2 * np.pi, 3)
        a = effective_field(rotate(v, theta), spec, basis, method="quadrature").value
        b = rotate(effective_field(v, spec, basis, method="quadrature").value, theta)
        worst = max(worst, float(np.linalg.norm(a - b)))
    return worst <= tol["rotation_equivariance"], f"max={worst:.2e}"


def check_effective_linear(tol):
    spec = NonlinearitySpec(gamma_R=0.0, gamma_I=0.0)
    grid = Grid(1, 64)
    basis = assemble_operator(Potential.trig(grid, 1.5, [{"k": [1], "cos": 0.5}]), truncation=8)
    diag = cgl_effective_linear(basis)
    generic = np.array([effective_field(np.eye(8)[k], spec, basis, method="quadrature").value[k] for k in range(8)])
    err = float(np.max(np.abs(generic - diag)))
    const = assemble_operator(Potential.constant(grid), truncation=8)
    err_c = float(np.max(np.abs(cgl_effective_linear(const) - (1 - const.eigenvalues_))))
    ok = err <= tol["effective_linear"] and err_c <= tol["effective_linear_constant"]
    return ok, f"generic={err:.2e} constant={err_c:.2e}"


def check_r3_null(tol):
    basis, spec = _m3_setup()
    value = verify_r3_null(_random_modes(np.random.default_rng(5), 3), spec, basis)
    return value <= tol["r3_null"], f"max={value:.2e}"


def check_dissipation(tol):
    cfg = SimulationConfig.from_dict(reference_config())
    v0 = cfg.initial_modes()
    residuals = []
    all_ok = True
    for dt in (2e-3, 1e-3, 5e-4):
        traj = integrate_perturbed(v0, cfg.spec, cfg.basis, IntegratorConfig(dt_slow=dt, T_slow=0.25, epsilon=0.1, record_every=1))
        rep = dissipation_check(traj, cfg.spec, cfg.basis)
        residuals.append(rep.max_residual)
        all_ok &= bool(rep.bound_ok.all())
    orders = np.log2(np.array(residuals[:-1]) / np.array(residuals[1:]))
    ok = all_ok and bool(np.all(orders >= tol["dissipation_order_min"]))
    return ok, f"orders={np.round(orders, 3).tolist()} bound_ok={all_ok}"


def check_convergence(tol):
    ref = tol["reference_errors"]
    cfg = SimulationConfig.from_dict(reference_config())
    study = convergence_study(cfg)
    errs, xi = study.errors, study.sup_xi
    ok = bool(np.all(np.diff(errs) < 0)) and bool(np.all(np.diff(xi) < 0))
    ok &= errs[-1] / errs[0] <= tol["convergence_ratio_max"]
    ok &= bool(np.allclose(errs, ref["sup_err_q0"], rtol=ref["rel_tol"], atol=0))
    ok &= bool(np.allclose(xi, ref["sup_xi"], rtol=ref["rel_tol"], atol=0))
    return ok, f"e={np.array2string(errs, precision=4)} ratio={errs[-1] / errs[0]:.3f}"


def check_lift_consistency(tol):
    cfg = SimulationConfig.from_dict(reference_config())
    basis, spec = cfg.basis, cfg.spec
    rng = np.random.default_rng(6)
    I0 = actions(cfg.initial_modes()) + 0.01 * rng.uniform(size=basis.n_modes_) / (1 + np.arange(basis.n_modes_)) ** 2
    icfg = IntegratorConfig(dt_slow=1.0 / 512)
    a = integrate_effective(lift(I0, rng.uniform(0, 2 * np.pi, I0.shape)), spec, basis, icfg).actions
    b = integrate_effective(lift(I0, rng.uniform(0, 2 * np.pi, I0.shape)), spec, basis, icfg).actions
    fine = integrate_effective(lift(I0, np.zeros_like(I0)), spec, basis, IntegratorConfig(dt_slow=1.0 / 1024)).actions
    integ_tol = float(np.max(np.abs(a - fine)))
    diff = float(np.max(np.abs(a - b)))
    return diff <= tol["lift_consistency_factor"] * integ_tol, f"diff={diff:.2e} integrator tol={integ_tol:.2e}"


def check_weyl(tol):
    f = TrigPolynomial({(1, 0): 1.0})
    rows = weyl_average_test([1.0, np.sqrt(2.0)], f, [0.3, 1.1], [10, 100, 1000])
    ok = all(r["gap"] <= 2.0 / r["T"] for r in rows)
    res = weyl_average_test([1.0, 1.0], TrigPolynomial({(1, -1): 1.0}), [0.3, 1.1], [10, 100, 1000])
    ok &= all(abs(r["gap"] - abs(np.cos(0.3 - 1.1))) < 1e-10 for r in res)
    return ok, "gaps=" + ",".join(f"{r['gap']:.1e}" for r in rows)


def check_resonance(tol):
    planted = resonance_scan(np.array([1.0, 2.0, 3.0]), K=3, S=2, tol=tol["resonance_tol"])
    ok = planted.best_value == 0.0 and np.dot(planted.best_vector, [1.0, 2.0, 3.0]) == 0.0
    flat = resonance_scan(assemble_operator(Potential.constant(Grid(1, 64)), truncation=8), K=6, S=3, tol=tol["resonance_tol"])
    ok &= flat.verdict == "resonant"
    hits = 0
    for seed in range(20):
        basis = assemble_operator(Potential.random_trig(Grid(1, 64), seed), truncation=8)
        hits += resonance_scan(basis, K=6, S=3, tol=tol["resonance_tol"]).verdict == "resonant"
    ok &= hits == 0
    return ok, f"random resonant={hits}/20"


CHECKS = [
    ("spectral exactness", check_spectrum),
    ("norm identity", check_norm_identity),
    ("linear conservation", check_linear_conservation),
    ("averaging identity", check_averaging_identity),
    ("effective rotation equivariance", check_rotation_equivariance),
    ("closed-form linear part", check_effective_linear),
    ("hamiltonian part nullity", check_r3_null),
    ("L2 balance and bound", check_dissipation),
    ("epsilon sweep", check_convergence),
    ("lifting consistency", check_lift_consistency),
    ("weyl averages", check_weyl),
    ("resonance scanner", check_resonance),
]


def run_selftest(echo=print):
    """Run every check; return ``True`` iff all pass."""
    tol = load_tolerances()
    passed = True
    for name, check in CHECKS:
        ok, detail = check(tol)
        passed &= bool(ok)
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return passed
