import math

import numpy as np
import pytest

from capfloor.core import INFINITE, ModelParams, OrderViolation, delta
from capfloor.diagnostics import gini_closed_form_floor, l1_distance
from capfloor.equilibrium import equilibrium_distribution
from capfloor.experiments import (
    fit_log_linear,
    generator_discrepancy,
    run_convergence_study,
    run_generator_oracle,
    run_gini_sweep,
    run_poc_study,
    worker_count,
)

BASE = ModelParams(5, 10, 7, n_max=40)


def test_worker_count(monkeypatch):
    assert worker_count(3) == 3
    monkeypatch.setenv("BDY_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.delenv("BDY_THREADS")
    assert worker_count() >= 1


def test_fit_log_linear_recovers_exponential():
    t = np.linspace(0, 4, 9)
    slope, intercept, r = fit_log_linear(t, 3.0 * np.exp(-0.7 * t))
    assert slope == pytest.approx(-0.7)
    assert intercept == pytest.approx(math.log(3.0))
    assert r == pytest.approx(-1.0)


# ----------------------------------------------------------------------------- convergence


def test_convergence_zero_horizon():
    result = run_convergence_study(BASE, t_end=0.0)
    _, p_star = equilibrium_distribution(BASE)
    assert len(result.records) == 1
    assert result.final_distance == l1_distance(delta(7, BASE), p_star) > 0
    assert math.isnan(result.rate)


def test_convergence_is_exponential():
    result = run_convergence_study(BASE, t_end=10.0, sample_times=np.arange(0, 10.5, 0.5))
    dist = [r["l1_to_equilibrium"] for r in result.records]
    assert all(y < x for x, y in zip(dist[2:], dist[3:]))
    assert result.correlation <= -0.999
    # slowest relaxation mode of the linearized flow at p*
    assert result.rate == pytest.approx(0.82, abs=0.05)
    assert result.final_distance < 1e-3
    assert set(result.records[0]) == {"time", "l1_to_equilibrium", "H", "H_ab", "H_ab_tilde", "gini"}


# ----------------------------------------------------------------------------- propagation of chaos


def test_poc_replicas_deterministic():
    first = run_poc_study(BASE, [20, 40], replicas=1, seed=3, workers=1)
    second = run_poc_study(BASE, [20, 40], replicas=1, seed=3, workers=1)
    assert first.records() == second.records()
    assert first.rows[0].std_error == 0.0


def test_poc_independent_of_worker_count():
    one = run_poc_study(BASE, [20, 40, 80], replicas=4, seed=1, workers=1)
    two = run_poc_study(BASE, [20, 40, 80], replicas=4, seed=1, workers=2)
    assert one.records() == two.records()
    assert one.slope == two.slope


def test_poc_error_shrinks():
    result = run_poc_study(BASE, [50, 200, 800], replicas=40, seed=0, workers=1)
    errors = [r.mean_error for r in result.rows]
    assert errors[0] > errors[1] > errors[2] > 0
    assert -0.75 < result.slope < -0.25
    assert result.slope_half_width > 0


@pytest.mark.parametrize("kwargs", [dict(n_list=[5, 50]), dict(n_list=[50, 20]), dict(n_list=[50], t=0.0)])
def test_poc_rejects_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        run_poc_study(BASE, replicas=1, workers=1, **kwargs)


# ----------------------------------------------------------------------------- Gini sweep


def test_sweep_single_pair_passes():
    result = run_gini_sweep(5, [2], [8], t_end=5.0, workers=1)
    assert result.passed
    assert result.violations == []
    assert [r["time"] for r in result.records] == [0, 1, 2, 3, 4, 5]


def test_sweep_uncapped_matches_closed_form():
    result = run_gini_sweep(5, range(5), [INFINITE], t_end=100.0, n_max=300, workers=1)
    assert result.passed
    final = result.final_gini()
    for a in range(5):
        assert result.equilibrium_gini[(a, INFINITE)] == pytest.approx(gini_closed_form_floor(a, 5), abs=1e-10)
        assert final[(a, INFINITE)] == pytest.approx(gini_closed_form_floor(a, 5), abs=1e-2)


def test_sweep_orders_equilibria():
    result = run_gini_sweep(5, range(5), [6, 8, 10, 15], workers=1)
    assert result.passed
    assert result.final_violations == []
    eq = result.equilibrium_gini
    for b in [6, 8, 10, 15]:
        col = [eq[(a, b)] for a in range(5)]
        assert all(x >= y for x, y in zip(col, col[1:]))
    for a in range(5):
        row = [eq[(a, b)] for b in [6, 8, 10, 15]]
        assert all(x <= y for x, y in zip(row, row[1:]))
    for (a, b), g in result.final_gini().items():
        assert g == pytest.approx(eq[(a, b)], abs=1e-5)


def test_sweep_rejects_invalid_pair():
    with pytest.raises(OrderViolation):
        run_gini_sweep(5, [5], [8], t_end=1.0, workers=1)


# ----------------------------------------------------------------------------- generator oracle


def test_oracle_small_chains():
    _, worst = generator_discrepancy(ModelParams(0, 2, 1, n_agents=2, n_max=5))
    assert worst < 1e-14
    _, worst = generator_discrepancy(ModelParams(0, 4, 2, n_agents=3, n_max=9))
    assert worst < 1e-12


def test_oracle_full_report():
    report = run_generator_oracle(6)
    assert report.passed
    assert {c["n_agents"] for c in report.cases} == {2, 3}
    assert any(c["b"] == INFINITE for c in report.cases)
    assert max(c["mu"] * c["n_agents"] for c in report.cases) <= 6


def test_oracle_rejects_large_enumeration():
    with pytest.raises(ValueError):
        run_generator_oracle(9)


def test_oracle_invalid_params_rejected():
    with pytest.raises(OrderViolation):
        ModelParams(1, 3, 1, n_agents=2)
