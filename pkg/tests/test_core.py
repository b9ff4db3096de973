import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_mean_mu

from capfloor.core import (
    INFINITE,
    MASS_TOL,
    MeanMismatch,
    ModelParams,
    NotNormalized,
    OrderViolation,
    TruncationTooSmall,
    make_prob_mass,
    replica_rng,
    validate_params,
)


def test_reference_parameters_are_valid():
    p = validate_params({"a": 5, "mu": 7, "b": 10, "n_max": 1000})
    assert (p.a, p.mu, p.b, p.n_max) == (5, 7, 10, 1000)


def test_uncapped_requires_truncation():
    p = validate_params({"a": 0, "mu": 5, "b": INFINITE, "n_max": 200})
    assert not p.finite_cap
    with pytest.raises(TruncationTooSmall):
        validate_params({"a": 0, "mu": 5, "b": "inf"})


def test_string_cap_parses():
    assert validate_params({"a": 0, "mu": 5, "b": "inf", "n_max": 50}).b == INFINITE
    assert validate_params({"a": "1", "mu": "5", "b": "9"}).b == 9


@pytest.mark.parametrize("a, mu, b", [(5, 5, 10), (5, 10, 10), (6, 5, 10), (3, 12, 10)])
def test_order_violation(a, mu, b):
    with pytest.raises(OrderViolation, match="requires a < mu < b"):
        validate_params({"a": a, "mu": mu, "b": b})


def test_truncation_too_small():
    with pytest.raises(TruncationTooSmall):
        ModelParams(5, 10, 7, n_max=11)
    assert ModelParams(5, 10, 7).n_max == 12


@given(st.integers(0, 20), st.integers(1, 20), st.integers(1, 20))
def test_validate_is_idempotent(a, gap1, gap2):
    p = ModelParams(a, a + gap1 + gap2, a + gap1)
    assert validate_params(p) is p
    assert validate_params(vars(p) | {}) == p


def test_delta_at_mean(base_params):
    p = make_prob_mass(np.eye(1001)[7], base_params)
    assert p.mass[7] == 1.0 and p.mass.sum() == 1.0
    assert not p.mass.flags.writeable


def test_zero_vector_rejected(base_params):
    with pytest.raises(NotNormalized):
        make_prob_mass(np.zeros(1001), base_params)


def test_two_point_mass(base_params):
    v = np.zeros(1001)
    v[0] = v[14] = 0.5
    assert make_prob_mass(v, base_params).mean == pytest.approx(7.0, abs=1e-12)


def test_mean_mismatch(base_params):
    with pytest.raises(MeanMismatch):
        make_prob_mass(np.eye(1001)[6], base_params)


def test_short_vector_is_padded():
    params = ModelParams(5, 10, 7)
    assert len(make_prob_mass([0] * 7 + [1], params)) == 13


@given(st.integers(0, 2**32 - 1), st.integers(10, 60))
def test_accepted_masses_sum_to_one(seed, support):
    params = ModelParams(2, 8, 4, n_max=support)
    p = random_mean_mu(params, np.random.default_rng(seed), support)
    assert abs(p.mass.sum() - 1) <= MASS_TOL


def test_replica_streams_reproducible_and_distinct():
    a = replica_rng(42, 3).random(5)
    assert np.array_equal(a, replica_rng(42, 3).random(5))
    assert not np.array_equal(a, replica_rng(42, 4).random(5))
    assert not np.array_equal(a, replica_rng(43, 3).random(5))
