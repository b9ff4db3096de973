"""Scalar functionals of a wealth distribution: entropies, Gini index, distances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    InadmissibleInitial,
    LengthMismatch,
    ModelParams,
    ProbMass,
    ZeroMean,
    as_array,
)
from .meanfield import log_exponential_moment, rates

# entries this small are exact zeros for the 0 log 0 = 0 convention
ZERO_FLOOR = 1e-300


def _xlogx(x: NDArray[np.float64]) -> NDArray[np.float64]:
    out = np.zeros_like(x)
    pos = x > ZERO_FLOOR
    out[pos] = x[pos] * np.log(x[pos])
    return out


def _windows(arr: NDArray[np.float64], params: ModelParams) -> tuple[NDArray, NDArray, NDArray]:
    """Split ``arr`` into the parts below ``a``, inside ``[a, b]`` and above ``b``."""
    a = params.a
    hi = len(arr) if not params.finite_cap else min(int(params.b) + 1, len(arr))
    return arr[:a], arr[a:hi], arr[hi:]


def boltzmann_h(p: ProbMass | ArrayLike) -> float:
    return float(_xlogx(as_array(p)).sum())


def h_ab(p: ProbMass | ArrayLike, params: ModelParams) -> float:
    """Entropy on ``[a, b]`` plus the raw mass outside it."""
    below, inside, above = _windows(as_array(p), params)
    return float(below.sum() + _xlogx(inside).sum() + above.sum())


def lyapunov_constants(params: ModelParams, p0: ProbMass | ArrayLike) -> tuple[float, float]:
    """Weights ``(k1, k2)`` that make :func:`h_ab_tilde` decrease from ``p0``.

    ``k1 = -ln(1 - mu/b)`` and
    ``k2 = ln max{(2**(b+1) + 2**a) / (1 - mu/b), sum 2**n p0_n}``.
    Logarithms are combined directly so large caps do not overflow.
    """
    if not params.finite_cap:
        raise ValueError("k1 and k2 are defined for a finite cap only")
    b, a, mu = int(params.b), params.a, params.mu
    k1 = -math.log1p(-mu / b)
    log_moment = log_exponential_moment(p0, 2.0)
    if not math.isfinite(log_moment):
        raise InadmissibleInitial("initial datum has no finite exponential moment")
    # log(2**(b+1) + 2**a) without forming 2**(b+1)
    log_bound = (b + 1) * math.log(2.0) + math.log1p(2.0 ** (a - b - 1)) + k1
    return k1, max(log_bound, log_moment)


def h_ab_tilde(p: ProbMass | ArrayLike, params: ModelParams, k1: float, k2: float) -> float:
    """``h_ab`` plus ``k1 * sum_{n>b} n p_n + k2 * sum_{n<a} (a-n) p_n``."""
    arr = as_array(p)
    below, _, above = _windows(arr, params)
    a = params.a
    n_above = np.arange(len(arr) - len(above), len(arr))
    return (
        h_ab(arr, params)
        + k1 * float(n_above @ above)
        + k2 * float((a - np.arange(len(below))) @ below)
    )


def h_ab_dissipation_bound(p: ProbMass | ArrayLike, params: ModelParams) -> float:
    """Upper bound on ``d/dt h_ab`` along the mean-field flow.

    ``-lambda_r log lambda_r * mass above b - lambda_g log lambda_g * mass below a``
    """
    arr = as_array(p)
    below, _, above = _windows(arr, params)
    r = rates(arr, params)
    term_r = -r.lambda_r * math.log(r.lambda_r) if r.lambda_r > 0 else 0.0
    term_g = -r.lambda_g * math.log(r.lambda_g) if r.lambda_g > 0 else 0.0
    return term_r * float(above.sum()) + term_g * float(below.sum())


def gini(p: ProbMass | ArrayLike) -> float:
    """Gini index ``sum_ij |i-j| p_i p_j / (2 m)`` where ``m`` is the mean of ``p``.

    Uses prefix sums over the (already sorted) wealth levels, O(n).
    """
    arr = as_array(p)
    levels = np.arange(len(arr), dtype=np.float64)
    mean = float(levels @ arr)
    if mean <= 0:
        raise ZeroMean("Gini index is undefined for zero mean wealth")
    # sum_{i<j} (j - i) p_i = j * F_{j-1} - S_{j-1}
    cum_mass = np.concatenate([[0.0], np.cumsum(arr)[:-1]])
    cum_wealth = np.concatenate([[0.0], np.cumsum(levels * arr)[:-1]])
    half = float(arr @ (levels * cum_mass - cum_wealth))
    return half / mean


def gini_double_sum(p: ProbMass | ArrayLike) -> float:
    """O(n^2) reference for :func:`gini`."""
    arr = as_array(p)
    levels = np.arange(len(arr), dtype=np.float64)
    mean = float(levels @ arr)
    if mean <= 0:
        raise ZeroMean("Gini index is undefined for zero mean wealth")
    diff = np.abs(levels[:, None] - levels[None, :])
    return float(arr @ diff @ arr) / (2.0 * mean)


def gini_closed_form_floor(a: int, mu: int) -> float:
    """Gini index of the equilibrium with floor ``a`` and no cap."""
    if not 0 <= a < mu:
        raise ValueError(f"requires 0 <= a < mu, got a={a}, mu={mu}")
    return 1.0 - (mu * mu - a * a + a) / (mu * (1 + 2 * (mu - a)))


def l1_distance(p: ProbMass | ArrayLike, q: ProbMass | ArrayLike) -> float:
    x, y = as_array(p), as_array(q)
    if len(x) != len(y):
        raise LengthMismatch(f"cannot compare distributions of lengths {len(x)} and {len(y)}")
    return float(np.abs(x - y).sum())


@dataclass(frozen=True)
class EntropyReport:
    h: float
    h_ab: float
    h_ab_tilde: float
    k1: float
    k2: float


def entropy_report(p: ProbMass | ArrayLike, params: ModelParams, k1: float, k2: float) -> EntropyReport:
    return EntropyReport(
        h=boltzmann_h(p),
        h_ab=h_ab(p, params),
        h_ab_tilde=h_ab_tilde(p, params, k1, k2),
        k1=k1,
        k2=k2,
    )
