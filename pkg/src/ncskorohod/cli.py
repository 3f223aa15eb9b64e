"""Command-line entry point.

Exit status: 0 when every requested check passes, 1 when a certificate or
verifier fails, 2 for usage and parse errors, 3 for solver errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import Problem, load_problem
from .errors import ConfigError, PathFormatError, SkorohodError
from .geometry import check_drop, check_semiconvex_set, check_suibc, check_uebc
from .sde import THREADS_ENV, brownian, monte_carlo, simulate
from .skorohod import certify, convergence_study, read_solution_csv, solve_with_drift

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

SDE_CHECKS = ("domain_membership", "variation", "identity", "boundary_support", "normal_alignment")


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text)


def _config(prob: Problem, args):
    cfg = prob.solver
    if args.tol is not None:
        cfg = dataclasses.replace(cfg, residual_tol=args.tol)
    return cfg


def _drift(prob: Problem):
    return prob.drift if prob.has_drift else None


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def cmd_solve(args):
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    m = prob.driver()
    sol = solve_with_drift(prob.phi, prob.x0, _drift(prob), m, cfg, driver_ref=prob.driver_spec["kind"])
    cert = certify(prob.phi, sol, m, config=cfg, drift=_drift(prob), rng_seed=args.seed or 0)
    out = args.out or prob.output.get("solution") or f"{_stem(args.problem)}.solution.csv"
    sol.write_csv(out)
    report = cert.to_dict()
    report["solution"] = out
    report["n_nodes"] = int(len(sol.times))
    report["n_bisections"] = int(sol.n_bisections)
    _dump(report, prob.output.get("certificate"))
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_certify(args):
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    m = prob.driver()
    sol = read_solution_csv(args.solution)
    cert = certify(prob.phi, sol, m, config=cfg, drift=_drift(prob), rng_seed=args.seed or 0)
    _dump(cert.to_dict(), args.out)
    for name in cert.failing():
        print(f"check failed: {name}", file=sys.stderr)
    return EXIT_OK if cert.passed else EXIT_FAIL


def _sde_params(prob: Problem, args):
    seed = args.seed if args.seed is not None else prob.sde.get("seed", 0)
    steps = args.steps[0] if args.steps else prob.sde.get("n_steps", 1000)
    return int(seed), int(steps)


def cmd_simulate(args):
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    seed, steps = _sde_params(prob, args)
    bm = brownian(seed, prob.T, steps, prob.diffusion.noise_dim)
    sol = simulate(prob.phi, prob.x0, _drift(prob), prob.diffusion, bm, cfg)
    cert = certify(prob.phi, sol, config=cfg, checks=SDE_CHECKS, rng_seed=seed)
    if args.out:
        sol.write_csv(args.out)
    report = {
        "seed": seed,
        "n_steps": steps,
        "n_bisections": int(sol.n_bisections),
        "terminal": [float(v) for v in sol.x[-1]],
        "total_variation": sol.total_variation,
        "certificate": cert.to_dict(),
    }
    _dump(report)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_mc(args):
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    seed, steps = _sde_params(prob, args)
    paths = args.paths if args.paths is not None else prob.sde.get("n_paths", 100)
    funcs = tuple(prob.sde.get("functionals", ("terminal", "variation")))
    rep = monte_carlo(prob.phi, prob.x0, _drift(prob), prob.diffusion, prob.T, steps, paths, seed, funcs, cfg)
    out = rep.to_dict()
    out["problem"] = os.path.basename(args.problem)
    out["drift"] = prob.drift.name if prob.has_drift else None
    out["diffusion"] = prob.diffusion.name
    out["solver"] = {k: (None if v is None else (str(v) if isinstance(v, float) and not np.isfinite(v) else v))
                     for k, v in dataclasses.asdict(cfg).items()}
    _dump(out, args.out or prob.output.get("report"))
    return EXIT_OK if rep.n_failures == 0 else EXIT_FAIL


def cmd_converge(args):
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    m = prob.driver()
    steps = args.steps or [max(1, m.n_steps // 64), max(1, m.n_steps // 16), max(1, m.n_steps // 4)]
    if max(steps) > m.n_steps:
        raise ConfigError(f"largest --steps value {max(steps)} exceeds the driver resolution {m.n_steps}", "--steps")
    rep = convergence_study(prob.phi, prob.x0, m, steps, cfg, _drift(prob))
    out = rep.to_dict()
    out["reference_steps"] = int(m.n_steps)
    _dump(out, args.out)
    return EXIT_OK


def cmd_check_domain(args):
    prob = load_problem(args.problem)
    dom = prob.domain
    n = int(prob.checks.get("n_samples", 1000))
    seed = args.seed or 0
    tol = 1e-9 if args.tol is None else args.tol
    s = dom.suibc
    r0 = float(prob.checks.get("drop_r0", s.delta))
    h0 = float(prob.checks.get("drop_h0", 2.0 * dom.scale))
    reports = [
        check_uebc(dom, n, seed, tol=tol),
        check_semiconvex_set(dom, dom.gamma, n, seed, tol=tol),
        check_suibc(dom, max(n // 10, 10), seed, tol=tol),
        check_drop(dom, h0, r0, max(n // 10, 10), seed, tol=tol),
    ]
    out = {
        "kind": dom.kind,
        "uebc_radius": str(dom.uebc_radius) if not np.isfinite(dom.uebc_radius) else dom.uebc_radius,
        "gamma": dom.gamma,
        "suibc": {"gamma": s.gamma, "delta": s.delta, "sigma": s.sigma, "analytic": s.analytic},
        "checks": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    _dump(out, args.out)
    return EXIT_OK if out["pass"] else EXIT_FAIL


def _steps(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("step counts must be positive")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="ncskorohod", description="Generalized Skorohod problems on non-convex domains.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="random seed")
        sp.add_argument("--out", default=None, help="output file")
        sp.add_argument("--tol", type=float, default=None, help="override the residual tolerance")
        return sp

    sp = common(sub.add_parser("solve", help="solve and certify a problem"))
    sp.add_argument("problem")
    sp.set_defaults(func=cmd_solve)
    sp = common(sub.add_parser("certify", help="certify an existing solution CSV"))
    sp.add_argument("problem")
    sp.add_argument("solution")
    sp.set_defaults(func=cmd_certify)
    sp = common(sub.add_parser("simulate", help="simulate one reflected SDE path"))
    sp.add_argument("problem")
    sp.add_argument("--steps", type=_steps, default=None)
    sp.set_defaults(func=cmd_simulate)
    sp = common(sub.add_parser("mc", help="Monte Carlo report"))
    sp.add_argument("problem")
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--steps", type=_steps, default=None)
    sp.set_defaults(func=cmd_mc)
    sp = common(sub.add_parser("converge", help="self-convergence study"))
    sp.add_argument("problem")
    sp.add_argument("--steps", type=_steps, default=None, help="comma-separated step counts")
    sp.set_defaults(func=cmd_converge)
    sp = common(sub.add_parser("check-domain", help="run the geometric verifiers"))
    sp.add_argument("problem")
    sp.set_defaults(func=cmd_check_domain)
    p.epilog = f"Environment: {THREADS_ENV} sets the Monte Carlo thread count."
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "paths", None) is not None and args.paths < 1:
        print("error: --paths must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, PathFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SkorohodError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())
