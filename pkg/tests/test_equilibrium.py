import itertools

import numpy as np
import pytest

from capfloor.core import INFINITE, ModelParams
from capfloor.equilibrium import (
    equilibrium_distribution,
    f_eval,
    g_eval,
    g_scale,
    solve_common_ratio,
)
from capfloor.meanfield import apply_L, rates

TRIPLES_25 = [(a, mu, b) for b in range(2, 26) for mu in range(1, b) for a in range(mu)]


def g_direct(x, a, mu, b):
    """g written out as its two defining sums."""
    first = x ** (mu - a) * sum(l * x**l for l in range(1, b - mu + 1))
    second = sum(sum(x**j for j in range(l)) for l in range(1, mu - a + 1))
    return first - second


def test_g_at_zero_is_floor_minus_mean():
    for a, mu, b in [(5, 7, 10), (0, 3, 9), (2, 10, 11)]:
        assert g_eval(0.0, ModelParams(a, b, mu)) == a - mu


def test_g_at_one():
    assert g_eval(1.0, ModelParams(5, 10, 7)) == 3.0
    assert g_eval(1.0, ModelParams(5, 9, 7)) == 0.0


def test_g_matches_direct_sums():
    rng = np.random.default_rng(0)
    for _ in range(200):
        b = int(rng.integers(2, 26))
        mu = int(rng.integers(1, b))
        a = int(rng.integers(0, mu))
        x = float(rng.uniform(0, 2))
        expected = g_direct(x, a, mu, b)
        assert g_eval(x, ModelParams(a, b, mu)) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_f_roots_and_constant_term():
    for a, mu, b in TRIPLES_25[::7]:
        params = ModelParams(a, b, mu)
        assert f_eval(1.0, params) == 0
        assert f_eval(0.0, params) == a - mu


def test_f_factors_through_g():
    rng = np.random.default_rng(1)
    params = ModelParams(5, 10, 7)
    for x in rng.uniform(0, 2, 100):
        lhs = f_eval(x, params)
        rhs = (x - 1) ** 2 * g_eval(x, params)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-13)


def test_symmetric_case_ratio_is_one():
    assert solve_common_ratio(ModelParams(5, 9, 7)) == 1.0


def test_large_cap_approaches_uncapped_ratio():
    assert solve_common_ratio(ModelParams(0, 200, 5)) == pytest.approx(5 / 6, abs=1e-6)


def test_reference_ratio_is_a_root_below_one():
    params = ModelParams(5, 10, 7)
    r = solve_common_ratio(params)
    assert 0 < r < 1
    assert abs(g_eval(r, params)) <= 1e-12


@pytest.mark.parametrize("a, mu, b", TRIPLES_25)
def test_case_selection_and_residuals(a, mu, b):
    params = ModelParams(a, b, mu)
    r = solve_common_ratio(params)
    assert (r < 1) == (2 * mu < a + b)
    assert (r == 1) == (2 * mu == a + b)
    assert (r > 1) == (2 * mu > a + b)
    # residuals relative to the size of the cancelling terms
    assert abs(g_eval(r, params)) <= 1e-12 * max(1.0, g_scale(r, params))
    f_scale = (b - mu) * r ** (b + 2 - a) + (b + 1 - mu) * r ** (b + 1 - a) + (mu - a + 1) * r + mu - a
    assert abs(f_eval(r, params)) <= 1e-10 * max(1.0, f_scale)


def test_symmetric_equilibrium_is_uniform():
    eq, p = equilibrium_distribution(ModelParams(5, 9, 7))
    assert eq.p_a == 0.2
    np.testing.assert_array_equal(p.mass[5:10], np.full(5, 0.2))
    assert p.mass[:5].sum() == 0 and p.mass[10:].sum() == 0


@pytest.mark.parametrize("mu", [1, 3, 5, 12])
def test_uncapped_floor_zero_is_geometric(mu):
    params = ModelParams(0, INFINITE, mu, n_max=1000)
    eq, p = equilibrium_distribution(params)
    assert eq.p_a == pytest.approx(1 / (mu + 1))
    n = np.arange(60)
    np.testing.assert_allclose(p.mass[:60], (mu / (mu + 1)) ** n / (mu + 1), rtol=1e-12)


@pytest.mark.parametrize("a, mu, b", TRIPLES_25[::3] + [(0, 5, INFINITE), (3, 7, INFINITE)])
def test_equilibrium_has_mean_mu(a, mu, b):
    params = ModelParams(a, b, mu, n_max=800 if b == INFINITE else None)
    eq, p = equilibrium_distribution(params)
    assert p.mean == pytest.approx(mu, abs=1e-8)
    if b != INFINITE and eq.r_bar != 1:
        r = eq.r_bar
        assert eq.p_a * (1 - r ** (b + 1 - a)) / (1 - r) == pytest.approx(1.0, rel=1e-12)


def test_fixed_point_for_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(20):
        b = int(rng.integers(2, 31))
        mu = int(rng.integers(1, b))
        a = int(rng.integers(0, mu))
        params = ModelParams(a, b, mu)
        _, p = equilibrium_distribution(params)
        assert np.abs(apply_L(p, params)).max() < 1e-10


@pytest.mark.parametrize("a, mu, b", TRIPLES_25[::5])
def test_detailed_balance_ratio(a, mu, b):
    params = ModelParams(a, b, mu)
    eq, p = equilibrium_distribution(params)
    r = rates(p, params)
    m = p.mass
    for n in range(a, b):
        assert r.lambda_r * m[n + 1] == pytest.approx(r.lambda_g * m[n], abs=1e-10)
    assert eq.r_bar == pytest.approx(r.lambda_g / r.lambda_r, rel=1e-10)


def test_uncapped_truncation_guard():
    from capfloor.core import TruncationTooSmall

    with pytest.raises(TruncationTooSmall):
        equilibrium_distribution(ModelParams(0, INFINITE, 12, n_max=100))
