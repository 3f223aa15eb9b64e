"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import functools
import math
import os
import time

import numpy as np
import pytest

from ncskorohod import (
    DiffusionField,
    HalfSpace,
    Path,
    SemiconvexPotential,
    SphericalShell,
    brownian,
    certify,
    check_semiconvex_set,
    check_uebc,
    monte_carlo,
    simulate,
    solve,
    solve_with_drift,
    stability_gap,
)
from ncskorohod.catalog import diffusion_catalog
from ncskorohod.config import load_problem
from ncskorohod.geometry import norm
from ncskorohod.sde import BrownianDriver
from ncskorohod.skorohod import windowed_variation_slack

from conftest import PROBLEMS, builtin_domains, record_acceptance

HALFLINE = HalfSpace([-1.0], 0.0)
SHELL = SphericalShell([0.0, 0.0], 1.0, 2.0)
CATALOG = sorted(f for f in os.listdir(PROBLEMS) if f.endswith(".toml"))


@functools.lru_cache(maxsize=None)
def catalog_run(name):
    prob = load_problem(os.path.join(PROBLEMS, name))
    m = prob.driver()
    drift = prob.drift if prob.has_drift else None
    return prob, m, solve_with_drift(prob.phi, prob.x0, drift, m, prob.solver)


def explicit_map_running_min(x0, m):
    """Reflection on [0, inf) from the running minimum, rows are paths."""
    y = x0 + m
    return y - np.minimum(np.minimum.accumulate(y, axis=-1), 0.0)


def test_catalog_size():
    assert len(CATALOG) >= 10


# 1 -------------------------------------------------------------------------


def test_criterion_01_one_dimensional_oracle():
    rng = np.random.default_rng(2024)
    phi = SemiconvexPotential(HALFLINE)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 60))
        t = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 1)), [1.0]])
        v = np.concatenate([[0.0], np.cumsum(rng.normal(0, 1, n))])
        x0 = float(rng.exponential(0.5))
        sol = solve(phi, [x0], Path(t, v[:, None]))
        assert np.array_equal(sol.times, t)
        x = explicit_map_running_min(x0, v)
        worst = max(worst, float(np.max(np.abs(sol.x[:, 0] - x))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5.0
    record_acceptance(1, ok, f"max node error {worst:.2e} (<= 1e-12), {elapsed:.2f} s (< 5 s)")
    assert ok


# 2 -------------------------------------------------------------------------


def test_criterion_02_rough_driver_convergence():
    phi = SemiconvexPotential(HALFLINE)
    fine_n = 64_000
    levels = (1_000, 4_000, 16_000)
    start = time.perf_counter()
    monotone, worst_ratio, worst_interp = True, 0.0, 0.0
    for seed in range(10):
        fine = brownian(seed, 1.0, fine_n, 1).path
        x_ref = explicit_map_running_min(0.0, fine.values[:, 0])
        errs = []
        for n in levels:
            stride = fine_n // n
            sol = solve(phi, [0.0], fine.resample(fine.times[::stride]))
            errs.append(float(np.max(np.abs(sol.x[:, 0] - x_ref[::stride]))))
            if n == levels[-1]:
                between = np.max(np.abs(np.interp(fine.times, sol.times, sol.x[:, 0]) - x_ref))
                worst_interp = max(worst_interp, float(between / fine.sup_norm()))
        monotone &= all(a > b for a, b in zip(errs, errs[1:]))
        worst_ratio = max(worst_ratio, errs[-1] / fine.sup_norm())
    elapsed = time.perf_counter() - start
    ok = monotone and worst_ratio <= 0.02 and elapsed < 30.0
    record_acceptance(2, ok, f"monotone={monotone}, finest node error / sup|m| = {worst_ratio:.4f} (<= 0.02), "
                             f"{elapsed:.1f} s (< 30 s); between-node ratio {worst_interp:.4f} for reference")
    assert ok


# 3 -------------------------------------------------------------------------


def test_criterion_03_boundary_support():
    phi = SemiconvexPotential(SHELL)
    t = np.linspace(0.0, 1.0, 2001)
    m = Path(t, t[:, None] * np.array([-2.0, 0.0]))
    fracs, ok = [], True
    for x0 in ([1.5, 0.0], [1.5, 0.2]):
        sol = solve(phi, x0, m)
        dk = norm(np.diff(sol.k, axis=0))
        off = SHELL.boundary_distance(sol.x[1:]) > SHELL.boundary_tol
        fracs.append(float(np.sum(dk[off]) / sol.total_variation))
        ok &= sol.total_variation > 0
    ok &= all(f == 0.0 for f in fracs)
    record_acceptance(3, ok, f"off-boundary share of |k| = {fracs} (== 0) for x0 = (1.5, 0) and (1.5, 0.2)")
    assert ok


# 4 -------------------------------------------------------------------------


def test_criterion_04_normal_alignment():
    rng = np.random.default_rng(4)
    worst, count = -math.inf, 0
    for name in CATALOG:
        prob, m, sol = catalog_run(name)
        dom, gamma = prob.domain, prob.phi.gamma
        h = np.diff(sol.times)
        normal = np.diff(sol.k, axis=0) - prob.phi.grad_g(sol.x[:-1]) * h[:, None]
        nn = norm(normal)
        ys = dom.sample_points(100, rng, boundary_fraction=0.5)
        for i in np.nonzero(nn > 0)[0]:
            w = ys - sol.x[i + 1]
            val = w @ normal[i] - gamma * nn[i] * np.sum(w * w, axis=1)
            worst = max(worst, float(np.max(val)))
            count += 1
    ok = worst <= 1e-9 and count > 0
    record_acceptance(4, ok, f"max violation {worst:.2e} (<= 1e-9) over {count} normal increments "
                             f"in {len(CATALOG)} runs")
    assert ok


# 5 -------------------------------------------------------------------------


def test_criterion_05_stability_inequality():
    phi = SemiconvexPotential(SHELL)
    assert phi.gamma == 0.5 and phi.rho == 0.0
    rng = np.random.default_rng(5)
    t = np.linspace(0.0, 1.0, 1001)
    start = time.perf_counter()
    worst = worst_sup = math.inf
    for _ in range(20):
        pair = []
        for _ in range(2):
            steps = rng.normal(0, 1.5 * math.sqrt(1e-3), (1000, 2)) + rng.normal(0, 2, 2) * 1e-3
            m = Path(t, np.concatenate([[[0.0, 0.0]], np.cumsum(steps, axis=0)]))
            r = rng.uniform(1.0, 2.0)
            a = rng.uniform(0, 2 * math.pi)
            pair.append((m, [r * math.cos(a), r * math.sin(a)]))
        (m1, x1), (m2, x2) = pair
        s1, s2 = solve(phi, x1, m1), solve(phi, x2, m2)
        rep = stability_gap(phi, s1, s2, m1, m2)
        worst = min(worst, rep.margin)
        worst_sup = min(worst_sup, rep.margin_sup)
    elapsed = time.perf_counter() - start
    ok = worst >= 0 and elapsed < 60.0
    record_acceptance(5, ok, f"min margin RHS - LHS = {worst:.3e} (>= 0) over 20 pairs, {elapsed:.1f} s (< 60 s); "
                                  f"sup-norm form {worst_sup:.3e}")
    assert ok


# 6 -------------------------------------------------------------------------


def test_criterion_06_windowed_variation():
    worst, windows, runs = math.inf, 0, 0
    for name in CATALOG:
        prob, m, sol = catalog_run(name)
        if math.isinf(prob.domain.uebc_radius):
            continue
        s = prob.domain.suibc
        slack, _, count = windowed_variation_slack(sol.times, sol.x, sol.k, sol.cumvar, s.delta, s.sigma,
                                                   prob.phi.lipschitz_L, prob.phi.rho)
        worst = min(worst, slack)
        windows += count
        runs += 1
    ok = worst >= 0 and runs > 0 and windows > 0
    record_acceptance(6, ok, f"min slack {worst:.3e} (>= 0) over {windows} windows in {runs} runs with finite r0")
    assert ok


# 7 -------------------------------------------------------------------------


def test_criterion_07_continuity():
    phi = SemiconvexPotential(SHELL)
    t = np.linspace(0.0, 1.0, 2001)
    m = Path(t, np.stack([-2.5 * t, 0.8 * np.sin(3 * t)], axis=1))
    p = np.stack([np.sin(5 * t), 1.0 - np.cos(4 * t)], axis=1) * 0.3
    base = solve(phi, [1.5, 0.2], m)
    gaps = []
    for n in (1, 2, 4, 8, 16):
        sol = solve(phi, [1.5, 0.2], Path(t, m.values + p / n))
        gaps.append(float(np.max(norm(sol.x - base.x)) + np.max(norm(sol.k - base.k))))
    decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
    ok = decreasing and gaps[-1] <= 0.25 * gaps[0]
    record_acceptance(7, ok, "gaps " + ", ".join(f"{g:.3e}" for g in gaps)
                      + f"; ratio n=16 / n=1 = {gaps[-1] / gaps[0]:.3f} (<= 0.25)")
    assert ok


# 8 -------------------------------------------------------------------------


def test_criterion_08_reflected_bm_statistics():
    n_paths, n_steps, seed = 10_000, 10_000, 0
    phi = SemiconvexPotential(HALFLINE)
    G = DiffusionField(lambda t, x: np.ones(np.shape(x) + (1,)), 1, name="unit")
    start = time.perf_counter()
    rep = monte_carlo(phi, [0.0], None, G, 1.0, n_steps, n_paths, seed, ("terminal",), keep_values=True)
    x_sim = rep.values["terminal"][:, 0]
    oracle = np.empty(n_paths)
    for j in range(n_paths):
        bm = brownian(seed + j, 1.0, n_steps, 1)
        oracle[j] = explicit_map_running_min(0.0, np.cumsum(bm.increments[:, 0]))[-1]
    elapsed = time.perf_counter() - start
    se_sim = float(rep.stats["terminal"].std_error[0])
    se_oracle = float(oracle.std(ddof=1) / math.sqrt(n_paths))
    gap = abs(float(x_sim.mean()) - float(oracle.mean()))
    target = math.sqrt(2.0 / math.pi)
    off = abs(float(oracle.mean()) - target)
    ok = rep.n_failures == 0 and gap <= 3 * se_sim and off <= 3 * se_oracle and elapsed < 60.0
    record_acceptance(8, ok, f"|mean - oracle mean| = {gap:.2e} (<= 3 SE = {3 * se_sim:.2e}); "
                             f"|oracle mean - 0.7979| = {off:.2e} (<= {3 * se_oracle:.2e}); {elapsed:.1f} s (< 60 s)")
    assert ok


# 9 -------------------------------------------------------------------------


def test_criterion_09_geometry_verifiers():
    worst = -math.inf
    for name, dom in builtin_domains().items():
        a = check_uebc(dom, 1000, 0)
        b = check_semiconvex_set(dom, dom.gamma, 1000, 0)
        worst = max(worst, a.max_violation, b.max_violation)
    bad_r0 = check_uebc(SHELL, 1000, 0, r0=1.5).max_violation
    bad_gamma = check_semiconvex_set(SHELL, 0.4, 1000, 0).max_violation
    ok = worst <= 1e-9 and bad_r0 > 0 and bad_gamma > 0
    record_acceptance(9, ok, f"max violation at declared parameters {worst:.2e} (<= 1e-9) over "
                             f"{len(builtin_domains())} domains; r0=1.5 gives {bad_r0:.3f}, gamma=0.4 gives "
                             f"{bad_gamma:.3f} (> 0)")
    assert ok


# 10 ------------------------------------------------------------------------


def test_criterion_10_degenerate_noise():
    same = 0
    for name in CATALOG:
        prob, m, _ = catalog_run(name)
        d = prob.domain.dim
        G = diffusion_catalog(None, prob.domain)
        if math.isinf(prob.solver.base_step):
            grid = m.times
        else:
            grid = np.linspace(0.0, m.T, math.ceil(m.T / prob.solver.base_step) + 1)
        bm = BrownianDriver(0, d, grid, np.random.default_rng(0).standard_normal((len(grid) - 1, d)))
        drift = prob.drift if prob.has_drift else None
        cfg = prob.solver
        a = simulate(prob.phi, prob.x0, drift, G, bm, cfg)
        b = solve_with_drift(prob.phi, prob.x0, drift, Path(grid, np.zeros((len(grid), d))), cfg)
        if (np.array_equal(a.times, b.times) and np.array_equal(a.x, b.x) and np.array_equal(a.k, b.k)
                and np.array_equal(a.cumvar, b.cumvar)):
            same += 1
    ok = same == len(CATALOG) and same >= 10
    record_acceptance(10, ok, f"{same}/{len(CATALOG)} catalog problems bitwise identical")
    assert ok


# catalog runs also certify ---------------------------------------------------


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_runs_certify(name):
    prob, m, sol = catalog_run(name)
    drift = prob.drift if prob.has_drift else None
    cert = certify(prob.phi, sol, m, config=prob.solver, drift=drift)
    assert cert.passed, cert.failing()
