import math

import numpy as np
import pytest

from ncskorohod import (
    DiffusionField,
    HalfSpace,
    Path,
    SemiconvexPotential,
    SolverConfig,
    SphericalShell,
    brownian,
    certify,
    monte_carlo,
    pathwise_stability,
    simulate,
    skorohod_map_1d,
    solve_with_drift,
)
from ncskorohod.catalog import diffusion_catalog, drift_catalog
from ncskorohod.errors import ConfigError, GridMismatch
from ncskorohod.sde import THREADS_ENV, bridge_split

HALFLINE = HalfSpace([-1.0], 0.0)
SHELL = SphericalShell([0.0, 0.0], 1.0, 2.0)
UNIT = DiffusionField(lambda t, x: np.ones(np.shape(x) + (1,)), 1, name="unit")


# -------------------------------------------------------------- brownian


def test_brownian_deterministic():
    a, b = brownian(11, 1.0, 500, 2), brownian(11, 1.0, 500, 2)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, brownian(12, 1.0, 500, 2).increments)


def test_brownian_increment_statistics():
    bm = brownian(0, 1.0, 100_000, 1)
    dt = 1e-5
    inc = bm.increments[:, 0]
    n = len(inc)
    assert abs(inc.mean()) <= 5 * math.sqrt(dt / n)
    # var of the sample variance of N(0, dt) is 2 dt^2 / n
    assert abs(inc.var() - dt) <= 5 * math.sqrt(2.0 / n) * dt


def test_brownian_zero_horizon():
    bm = brownian(3, 0.0, 10, 2)
    assert bm.increments.shape == (0, 2)
    assert bm.path.values.shape == (1, 2) and np.all(bm.path.values == 0)


def test_bridge_split_sums_exactly(rng):
    for _ in range(200):
        dB = rng.standard_normal(3) * 0.1
        a, b = bridge_split(dB, 0.01, rng)
        assert np.array_equal(a + b, dB)


def test_bridge_split_midpoint_law():
    rng = np.random.default_rng(5)
    h = 0.04
    a = np.array([bridge_split(np.array([0.3]), h, rng)[0][0] for _ in range(20_000)])
    assert abs(a.mean() - 0.15) <= 5 * math.sqrt(h / 4 / len(a))
    assert abs(a.var() - h / 4) <= 5 * math.sqrt(2.0 / len(a)) * h / 4


# -------------------------------------------------------------- simulate


@pytest.mark.parametrize("seed", range(5))
def test_reflected_bm_matches_explicit_map(seed):
    bm = brownian(seed, 1.0, 2000, 1)
    sol = simulate(SemiconvexPotential(HALFLINE), [0.0], None, UNIT, bm)
    x, _ = skorohod_map_1d(0.0, bm.path.values[:, 0])
    np.testing.assert_array_equal(sol.times, bm.grid)
    np.testing.assert_allclose(sol.x[:, 0], x, atol=1e-10)


def test_zero_diffusion_equals_deterministic_solver():
    phi = SemiconvexPotential(SHELL)
    f = drift_catalog({"name": "rotation", "omega": 2.0}, SHELL)
    G = diffusion_catalog(None, SHELL)
    bm = brownian(4, 1.0, 1000, 2)
    a = simulate(phi, [1.5, 0.0], f, G, bm)
    m = Path(bm.grid, np.zeros((len(bm.grid), 2)))
    b = solve_with_drift(phi, [1.5, 0.0], f, m)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.k, b.k)


def test_shell_paths_certify():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 0.3}, SHELL)
    checks = ("domain_membership", "boundary_support", "normal_alignment", "identity", "variation")
    for seed in range(5):
        sol = simulate(phi, [1.5, 0.0], None, G, brownian(seed, 1.0, 1000, 2))
        cert = certify(phi, sol, checks=checks)
        assert cert.passed, cert.failing()


def test_simulation_with_bisection_certifies():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 3.0}, SHELL)
    sol = simulate(phi, [1.2, 0.0], None, G, brownian(8, 1.0, 20, 2))
    assert sol.n_bisections > 0
    assert certify(phi, sol, checks=("domain_membership", "identity", "normal_alignment")).passed
    # the noise column still sums to G times the driver's increments
    np.testing.assert_allclose(sol.driver[-1], 3.0 * brownian(8, 1.0, 20, 2).path.values[-1], atol=1e-12)


def test_simulate_rejects_coarse_grid():
    with pytest.raises(GridMismatch):
        simulate(SemiconvexPotential(HALFLINE), [0.0], None, UNIT, brownian(0, 1.0, 10, 1),
                 SolverConfig(base_step=0.01))


def test_noise_dimension_checked():
    with pytest.raises(ValueError):
        simulate(SemiconvexPotential(HALFLINE), [0.0], None, UNIT, brownian(0, 1.0, 10, 2))


# ------------------------------------------------------------ Monte Carlo


def test_monte_carlo_deterministic():
    phi = SemiconvexPotential(HALFLINE)
    a = monte_carlo(phi, [0.0], None, UNIT, 1.0, 200, 300, 9, ("terminal", "variation"))
    b = monte_carlo(phi, [0.0], None, UNIT, 1.0, 200, 300, 9, ("terminal", "variation"))
    assert a.to_dict() == b.to_dict()


def test_monte_carlo_single_path_equals_simulate():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 0.3}, SHELL)
    rep = monte_carlo(phi, [1.5, 0.0], None, G, 1.0, 500, 1, 42, ("terminal", "variation", "sup_norm"))
    sol = simulate(phi, [1.5, 0.0], None, G, brownian(42, 1.0, 500, 2))
    assert np.array_equal(rep.stats["terminal"].mean, sol.x[-1])
    assert float(rep.stats["variation"].mean) == sol.total_variation
    assert float(rep.stats["sup_norm"].mean) == float(np.max(np.sqrt(np.sum(sol.x * sol.x, -1))))
    assert np.all(rep.stats["terminal"].std_error == 0)


def test_batched_and_scalar_paths_agree():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 0.3}, SHELL)
    fast = monte_carlo(phi, [1.5, 0.0], None, G, 1.0, 300, 40, 0, ("terminal",), keep_values=True)
    slow = monte_carlo(phi, [1.5, 0.0], None, G, 1.0, 300, 40, 0,
                       ("terminal", ("t1", lambda s: s.x[-1])), keep_values=True)
    assert np.array_equal(fast.values["terminal"], slow.values["t1"])


def test_threads_do_not_change_results(monkeypatch):
    phi = SemiconvexPotential(HALFLINE)
    one = monte_carlo(phi, [0.0], None, UNIT, 1.0, 100, 250, 1, ("terminal",), chunk=50)
    monkeypatch.setenv(THREADS_ENV, "4")
    four = monte_carlo(phi, [0.0], None, UNIT, 1.0, 100, 250, 1, ("terminal",), chunk=50)
    assert one.to_dict() == four.to_dict()


def test_standard_error_definition():
    phi = SemiconvexPotential(HALFLINE)
    rep = monte_carlo(phi, [0.0], None, UNIT, 1.0, 50, 200, 0, ("terminal",), keep_values=True)
    v = rep.values["terminal"][:, 0]
    s = rep.stats["terminal"]
    assert s.variance[0] == pytest.approx(v.var(ddof=1), rel=1e-12)
    assert s.std_error[0] == pytest.approx(math.sqrt(v.var(ddof=1) / 200), rel=1e-12)


def test_reflected_bm_variance_against_oracle():
    # second moment of |N(0, 1)| is 1, so var = 1 - 2/pi
    phi = SemiconvexPotential(HALFLINE)
    rep = monte_carlo(phi, [0.0], None, UNIT, 1.0, 400, 4000, 100, ("terminal",), keep_values=True)
    v = rep.values["terminal"][:, 0]
    target = 1.0 - 2.0 / math.pi
    se_var = math.sqrt((np.mean((v - v.mean()) ** 4) - v.var() ** 2) / len(v))
    assert abs(v.var(ddof=1) - target) <= 5 * se_var


def test_collapsed_paths_are_counted():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 3.0}, SHELL)
    rep = monte_carlo(phi, [1.2, 0.0], None, G, 1.0, 5, 10, 0, ("terminal",), SolverConfig(max_bisections=0))
    assert rep.n_failures > 0
    assert rep.n_failures == len(rep.failed_paths)


def test_unknown_functional():
    with pytest.raises(KeyError):
        monte_carlo(SemiconvexPotential(HALFLINE), [0.0], None, UNIT, 1.0, 5, 2, 0, ("median",))


# ------------------------------------------------------- pathwise stability


def test_pathwise_gap_is_damped():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 0.5}, SHELL)
    rep = pathwise_stability(phi, None, G, [1.5, 0.0], [1.6, 0.1], brownian(2, 1.0, 2000, 2))
    assert rep.sup_damped_gap <= rep.initial_gap * (1 + 1e-9)


def test_same_start_zero_gap():
    phi = SemiconvexPotential(SHELL)
    G = diffusion_catalog({"name": "constant", "scale": 0.5}, SHELL)
    rep = pathwise_stability(phi, None, G, [1.5, 0.0], [1.5, 0.0], brownian(2, 1.0, 500, 2))
    assert rep.sup_damped_gap == 0.0


# ------------------------------------------------------------------ catalog


def test_catalog_constants():
    f = drift_catalog({"name": "linear_pull", "rate": 2.0}, SHELL)
    assert f.mu_onesided == -2.0
    assert f.check_onesided(SHELL).passed and f.check_sharp(SHELL).passed
    G = diffusion_catalog({"name": "first_axis", "scale": 0.7}, SHELL)
    assert G.noise_dim == 1
    assert G.check_lipschitz(SHELL).passed and G.check_sharp(SHELL).passed


@pytest.mark.parametrize(
    "builder, section",
    [
        (drift_catalog, {"name": "swirl"}),
        (drift_catalog, {"name": "constant", "value": [1.0]}),
        (drift_catalog, {"name": "linear_pull", "speed": 1.0}),
        (diffusion_catalog, {"name": "constant", "scale": 1.0, "extra": 2}),
    ],
)
def test_catalog_errors(builder, section):
    with pytest.raises(ConfigError):
        builder(section, SHELL)
