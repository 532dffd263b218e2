"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(blow-up or non-finite state), 3 failed self-test.
"""
import argparse
import json
import os
import sys

from .dynamics import integrate_effective, integrate_perturbed
from .exceptions import ConfigurationError, IntegrationError, NlsAvgError
from .harness import SimulationConfig, TrigPolynomial, convergence_study, default_seed, resonance_scan, weyl_average_test
from .spectral import weyl_fit

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_SELFTEST = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _load(args, required=True):
    if args.config is None:
        if required:
            raise ConfigurationError("--config is required for this subcommand")
        return None
    if not os.path.exists(args.config):
        raise ConfigurationError(f"config file not found: {args.config}")
    with open(args.config) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    seed = args.seed if args.seed is not None else default_seed(None)
    if seed is not None:
        doc.setdefault("averaging", {})["seed"] = int(seed)
    if args.epsilon is not None:
        doc["epsilon"] = args.epsilon
    if args.out is not None:
        doc.setdefault("output", {})["dir"] = args.out
    if getattr(args, "threads", None) is not None:
        doc["threads"] = args.threads
    return SimulationConfig.from_dict(doc)


def _out_dir(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _emit(obj):
    print(json.dumps(obj, indent=2))


def cmd_spectrum(args):
    cfg = _load(args)
    basis = cfg.basis
    out = _out_dir(cfg)
    path = os.path.join(out, "basis.json")
    basis.save(path)
    fit = weyl_fit(basis) if basis.n_modes_ >= 16 else None
    _emit(
        {
            "eigenvalues": basis.eigenvalues_.tolist(),
            "orthonormality_residual": basis.orthonormality_residual(),
            "weyl_exponent": None if fit is None else fit[0],
            "weyl_prefactor": None if fit is None else fit[1],
            "basis_file": path,
        }
    )
    return EXIT_OK


def cmd_resonance(args):
    cfg = _load(args)
    section = cfg.raw["resonance"]
    K = args.K if args.K is not None else section.get("K", 6)
    S = args.S if args.S is not None else section.get("S", 3)
    tol = args.tol if args.tol is not None else section.get("tol", 1e-6)
    report = resonance_scan(cfg.basis, K=K, S=S, tol=tol)
    _emit(report.to_dict())
    return EXIT_OK


def cmd_weyl(args):
    cfg = _load(args)
    section = cfg.raw.get("weyl")
    if section is None:
        raise ConfigurationError("config has no 'weyl' section")
    f = TrigPolynomial.from_terms(section["terms"])
    x0 = section.get("x0", [0.0] * len(section["frequencies"]))
    rows = weyl_average_test(section["frequencies"], f, x0, section["T_values"])
    out = _out_dir(cfg)
    with open(os.path.join(out, "weyl.csv"), "w") as fh:
        fh.write("T,time_average,haar_average,gap\n")
        for r in rows:
            fh.write(f"{r['T']:.17g},{r['time_average']:.17g},{r['haar_average']:.17g},{r['gap']:.17g}\n")
    _emit(rows)
    return EXIT_OK


def _single_run(args, effective):
    cfg = _load(args)
    eps = cfg.raw.get("epsilon", cfg.epsilon_sweep[0])
    icfg = cfg.integrator_config(eps)
    v0 = cfg.initial_modes()
    avg = cfg.averaging
    if effective:
        traj = integrate_effective(v0, cfg.spec, cfg.basis, icfg, avg["method"], avg["budget"], avg["seed"])
        stem = "effective"
    else:
        traj = integrate_perturbed(v0, cfg.spec, cfg.basis, icfg)
        stem = f"perturbed_eps{eps:g}"
    out = _out_dir(cfg)
    traj.write(os.path.join(out, f"{stem}.csv"), os.path.join(out, f"{stem}.json"))
    if traj.diverged:
        print(f"run diverged at tau={traj.times[-1]:.6g}: |v|_2 reached blowup_threshold", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit({"records": len(traj.times), "final_actions": traj.actions[-1].tolist(), "output": out})
    return EXIT_OK


def cmd_simulate(args):
    return _single_run(args, effective=False)


def cmd_effective(args):
    return _single_run(args, effective=True)


def cmd_converge(args):
    cfg = _load(args)
    study = convergence_study(cfg, threads=args.threads, xi_only=args.xi_only)
    study.write(_out_dir(cfg))
    _emit(study.summary())
    return EXIT_OK


def cmd_selftest(args):
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_SELFTEST


def build_parser():
    parser = _Parser(prog="nlsavg", description="Averaging for weakly nonlinear Schroedinger / CGL equations on the torus.")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--epsilon", type=float, help="override the perturbation parameter")
    common.add_argument("--seed", type=int, help="override the averaging seed (default: $NLSAVG_SEED)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="cap on concurrent runs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("spectrum", parents=[common], help="eigendecompose A_V, fit Weyl's law, export the basis").set_defaults(func=cmd_spectrum)
    res = sub.add_parser("resonance", parents=[common], help="scan for integer relations among eigenvalues")
    res.add_argument("--K", type=int)
    res.add_argument("--S", type=int)
    res.add_argument("--tol", type=float)
    res.set_defaults(func=cmd_resonance)
    sub.add_parser("weyl", parents=[common], help="time averages versus Haar averages").set_defaults(func=cmd_weyl)
    sub.add_parser("simulate", parents=[common], help="one perturbed run").set_defaults(func=cmd_simulate)
    sub.add_parser("effective", parents=[common], help="one effective-equation run").set_defaults(func=cmd_effective)
    conv = sub.add_parser("converge", parents=[common], help="epsilon sweep against the effective equation")
    conv.add_argument("--xi-only", action="store_true", help="only compute the averaging residual, skip the effective solve")
    conv.set_defaults(func=cmd_converge)
    sub.add_parser("selftest", parents=[common], help="run the invariant suite").set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, NlsAvgError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
