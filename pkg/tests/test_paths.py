import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncskorohod import BVPath, Path, modulus, mu, mu_inverse, paper_constants, read_path_csv, total_variation
from ncskorohod.errors import ArgumentOutOfMuRange, OutOfRange, PathFormatError
from ncskorohod.paths import path_to_string, write_path_csv
from ncskorohod.sde import brownian


def modulus_pairs_oracle(y, eps):
    """All pairs from nodes and node +- eps, kept when |t - s| <= eps."""
    t = y.times
    cand = np.unique(np.clip(np.concatenate([t, t + eps, t - eps]), 0, y.T))
    v = y(cand)
    dt = np.abs(cand[:, None] - cand[None, :])
    dv = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
    return float(np.max(np.where(dt <= eps * (1 + 1e-15), dv, 0.0)))


def modulus_dense_lower_bound(y, eps, n=3000):
    s = np.linspace(0, y.T, n)
    v = y(s)
    dt = np.abs(s[:, None] - s[None, :])
    dv = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
    return float(np.max(np.where(dt <= eps, dv, 0.0)))


def tv_partition_oracle(k, s, t, rng, n_partitions=50):
    """Sums over random partitions never exceed the supremum; refining through all nodes attains it."""
    best = 0.0
    for _ in range(n_partitions):
        p = np.sort(np.concatenate([[s, t], rng.uniform(s, t, rng.integers(1, 40))]))
        best = max(best, float(np.sum(np.linalg.norm(np.diff(k(p), axis=0), axis=-1))))
    inner = k.times[(k.times > s) & (k.times < t)]
    p = np.sort(np.concatenate([[s, t], inner, rng.uniform(s, t, 20)]))
    attained = float(np.sum(np.linalg.norm(np.diff(k(p), axis=0), axis=-1)))
    return best, attained


def random_pl(rng, n=30, dim=1):
    t = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 2)), [1.0]])
    v = np.cumsum(rng.standard_normal((n, dim)), axis=0)
    return Path(t, v - v[0])


# ------------------------------------------------------------------ Path


def test_path_validation():
    with pytest.raises(ValueError):
        Path([0.0, 0.5, 0.5], [0, 1, 2])
    with pytest.raises(ValueError):
        Path([0.1, 0.5], [0, 1])
    with pytest.raises(ValueError):
        Path([0.0, 1.0], [0.0, np.nan])


def test_path_is_exact_at_nodes_and_linear_between():
    y = Path([0.0, 0.3, 1.0], [[0.0], [0.3], [-0.4]])
    assert y(0.3)[0] == 0.3
    np.testing.assert_allclose(y(0.65), [-0.05], atol=1e-15)
    assert y.sup_norm() == 0.4
    assert y.sup_norm(0.3) == 0.3


def test_path_values_are_read_only():
    y = Path([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        y.values[0, 0] = 3.0


# --------------------------------------------------------------- modulus


@pytest.mark.parametrize(
    "times, values, eps, expected",
    [
        ([0.0, 1.0], [0.0, 1.0], 0.25, 0.25),
        ([0.0, 0.5, 1.0], [0.5, 0.0, 0.5], 0.6, 0.5),
        ([0.0, 1.0], [0.0, 0.0], 0.3, 0.0),
    ],
)
def test_modulus_examples(times, values, eps, expected):
    assert modulus(Path(times, values), eps) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("eps", [0.003, 0.05, 0.31, 1.0])
def test_modulus_matches_brute_force(seed, eps):
    y = brownian(seed, 1.0, 200, 1).path
    got = modulus(y, eps)
    assert got == pytest.approx(modulus_pairs_oracle(y, eps), abs=1e-12)
    assert got >= modulus_dense_lower_bound(y, eps) - 1e-12


def test_modulus_2d_against_oracle(rng):
    y = random_pl(rng, 40, 2)
    for eps in (0.01, 0.1, 0.5):
        assert modulus(y, eps) == pytest.approx(modulus_pairs_oracle(y, eps), abs=1e-12)


def test_modulus_rejects_bad_eps():
    y = Path([0.0, 1.0], [0.0, 1.0])
    for eps in (0.0, -1.0, 1.5):
        with pytest.raises(OutOfRange):
            modulus(y, eps)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.45), st.floats(0.01, 0.45))
def test_modulus_monotone_and_subadditive(seed, e1, e2):
    y = brownian(seed, 1.0, 64, 1).path
    m1, m2, m12 = modulus(y, e1), modulus(y, e2), modulus(y, e1 + e2)
    assert m12 <= m1 + m2 + 1e-12
    assert modulus(y, min(e1, e2)) <= modulus(y, max(e1, e2)) + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_refinement_leaves_functionals_unchanged(seed):
    y = brownian(seed, 1.0, 50, 2).path
    mid = 0.5 * (y.times[1:] + y.times[:-1])
    fine = y.resample(np.sort(np.concatenate([y.times, mid])))
    for eps in (0.02, 0.3):
        assert modulus(fine, eps) == pytest.approx(modulus(y, eps), abs=1e-12)
    assert total_variation(fine) == pytest.approx(total_variation(y), abs=1e-12)


# -------------------------------------------------------------------- mu


def test_mu_linear_and_constant():
    lin = Path([0.0, 1.0], [0.0, 1.0])
    const = Path([0.0, 1.0], [0.0, 0.0])
    assert mu(lin, 0.3) == pytest.approx(0.6, abs=1e-15)
    assert mu_inverse(lin, 0.6) == pytest.approx(0.3, abs=1e-11)
    assert mu(const, 0.3) == 0.3
    assert mu_inverse(const, 0.3) == pytest.approx(0.3, abs=1e-11)


@pytest.mark.parametrize("seed", range(4))
def test_mu_inverse_round_trip(seed):
    y = brownian(seed, 1.0, 300, 1).path
    for eps in np.random.default_rng(seed).uniform(1e-3, 1.0, 10):
        assert mu_inverse(y, mu(y, eps)) == pytest.approx(eps, abs=1e-10)


def test_mu_inverse_out_of_range():
    y = Path([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(OutOfRange):
        mu_inverse(y, 2.5)
    with pytest.raises(OutOfRange):
        mu_inverse(y, 0.0)


# ------------------------------------------------------------ variation


@pytest.mark.parametrize(
    "times, values, expected",
    [
        ([0.0, 0.5, 1.0], [0.5, 0.0, 0.5], 1.0),
        ([0.0, 1.0], [[0.0, 0.0], [1.0, 2.0]], math.sqrt(5.0)),
    ],
)
def test_total_variation_examples(times, values, expected):
    assert total_variation(Path(times, values)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_total_variation_partition_oracle(seed):
    rng = np.random.default_rng(seed)
    k = random_pl(rng, 25, 2)
    s, t = np.sort(rng.uniform(0, 1, 2))
    tv = total_variation(k, s, t)
    best, attained = tv_partition_oracle(k, s, t, rng)
    assert best <= tv + 1e-12
    assert attained == pytest.approx(tv, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_total_variation_additive(seed, a, b, c):
    s, t, u = sorted((a, b, c))
    k = random_pl(np.random.default_rng(seed), 20, 1)
    assert total_variation(k, s, u) == pytest.approx(total_variation(k, s, t) + total_variation(k, t, u), abs=1e-12)


def test_bvpath_cumvar_checked():
    BVPath([0.0, 1.0], [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        BVPath([0.0, 1.0], [0.0, 1.0], [0.0, 0.5])


# ------------------------------------------------------------- constants


def test_constants_zero_driver():
    m = Path([0.0, 1.0], [0.0, 0.0])
    c = paper_constants(m, 1.0, 1.0, 0.1)
    # arg = 0.01 e^-2, mu^-1(arg) = arg
    assert c.Delta_m == pytest.approx(738.9056098930650, rel=1e-12)
    assert c.log_C_Tm == pytest.approx(2.0 + 738.9056098930650, rel=1e-12)
    assert c.C_Tm == math.inf


def test_constants_linear_driver():
    m = Path([0.0, 1.0], [0.0, 1.0])
    c = paper_constants(m, 1.0, 1.0, 1.0)
    # arg = e^-3, mu^-1(arg) = arg / 2
    assert c.Delta_m == pytest.approx(40.171073846375336, rel=1e-10)
    assert c.C_Tm == pytest.approx(math.exp(3.0 + 40.171073846375336), rel=1e-9)


def test_constants_out_of_range():
    m = Path([0.0, 0.01], [0.0, 0.0])
    with pytest.raises(ArgumentOutOfMuRange):
        paper_constants(m, 0.01, 1.0, 10.0)


# ------------------------------------------------------------------- CSV


def test_csv_round_trip_exact(tmp_path):
    y = brownian(7, 1.0, 100, 3).path
    f = tmp_path / "p.csv"
    write_path_csv(f, y)
    back = read_path_csv(f)
    assert np.array_equal(back.times, y.times) and np.array_equal(back.values, y.values)


def test_csv_round_trip_bvpath():
    k = BVPath([0.0, 0.5, 1.0], [[0.0], [1.0 / 3.0], [0.0]])
    back = read_path_csv(io.StringIO(path_to_string(k)))
    assert isinstance(back, BVPath)
    assert np.array_equal(back.cumvar, k.cumvar)


@pytest.mark.parametrize(
    "text, where",
    [
        ("t,x1\n0,0\n0.5,nan\n", "line 3"),
        ("t,x1\n0,0\n0.5,1\n0.5,2\n", "line 4"),
        ("t,x1\n0,0\n1,2,3\n", "line 3"),
        ("s,x1\n0,0\n", "line 1"),
        ("t,x1\n0.1,0\n", "line 2"),
        ("t,x1\n0,0\n1,abc\n", "line 3"),
    ],
)
def test_csv_errors_are_positioned(text, where):
    with pytest.raises(PathFormatError) as err:
        read_path_csv(io.StringIO(text))
    assert where in str(err.value)
