"""Stationary distribution of the mean-field system.

The equilibrium is geometric on ``[a, b]`` with common ratio ``r_bar``. For a
finite cap ``r_bar`` is the unique positive root of

    g(x) = x**(mu-a) * sum_{l=1}^{b-mu} l x**l  -  sum_{l=1}^{mu-a} (1 + x + ... + x**(l-1))

which is the mean constraint with the double root at ``x = 1`` divided out.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .core import (
    ROOT_TOL,
    BracketFailure,
    EquilibriumDist,
    ModelParams,
    ProbMass,
    TruncationTooSmall,
    make_prob_mass,
)

TAIL_FOLD_TOL = 1e-12


def g_coefficients(params: ModelParams) -> NDArray[np.float64]:
    """Coefficients of ``g`` in increasing powers of ``x``."""
    _require_finite(params)
    m = params.mu - params.a
    top = int(params.b) - params.mu
    coef = np.zeros(m + top + 1)
    coef[:m] = -(m - np.arange(m))
    coef[m + 1 :] = np.arange(1, top + 1)
    return coef


def _horner(coef: NDArray[np.float64], x: float) -> float:
    acc = 0.0
    for c in coef[::-1]:
        acc = acc * x + c
    return acc


def g_eval(x: float, params: ModelParams) -> float:
    return _horner(g_coefficients(params), x)


def g_prime(x: float, params: ModelParams) -> float:
    coef = g_coefficients(params)
    return _horner(coef[1:] * np.arange(1, len(coef)), x)


def g_scale(x: float, params: ModelParams) -> float:
    """``sum |c_j| x**j``: magnitude of the terms that cancel at a root."""
    return _horner(np.abs(g_coefficients(params)), abs(x))


def f_eval(x: float, params: ModelParams) -> float:
    """The mean-constraint polynomial ``(x - 1)**2 * g(x)`` in expanded form."""
    _require_finite(params)
    a, b, mu = params.a, int(params.b), params.mu
    return (b - mu) * x ** (b + 2 - a) + (mu - b - 1) * x ** (b + 1 - a) + (mu - a + 1) * x + a - mu


def _require_finite(params: ModelParams) -> None:
    if not params.finite_cap:
        raise ValueError("the ratio polynomial needs a finite cap b")


def solve_common_ratio(params: ModelParams) -> float:
    """Unique positive root of ``g``: below 1, equal to 1 or above 1 as ``2 mu`` is
    below, equal to or above ``a + b``."""
    if not params.finite_cap:
        m = params.mu - params.a
        return m / (m + 1)
    a, b, mu = params.a, int(params.b), params.mu
    assert b >= a + 2
    if 2 * mu == a + b:
        return 1.0
    coef = g_coefficients(params)
    if 2 * mu < a + b:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = 1.0, 2.0
        while _horner(coef, hi) <= 0:
            lo, hi = hi, 2.0 * hi
            if hi > 1e6:
                raise BracketFailure(f"no sign change of g found for {params}")
    g_lo, g_hi = _horner(coef, lo), _horner(coef, hi)
    if not (g_lo < 0 < g_hi):
        raise BracketFailure(f"g({lo})={g_lo}, g({hi})={g_hi} do not bracket a root")
    while hi - lo >= ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _horner(coef, mid) < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    dcoef = coef[1:] * np.arange(1, len(coef))
    for _ in range(2):
        slope = _horner(dcoef, x)
        if slope <= 0:
            break
        step = x - _horner(coef, x) / slope
        # a Newton step that leaves the bracket is rounding noise
        if lo - ROOT_TOL <= step <= hi + ROOT_TOL:
            x = step
    return float(x)


def equilibrium_distribution(params: ModelParams) -> tuple[EquilibriumDist, ProbMass]:
    """Equilibrium ``p*``: zero outside ``[a, b]``, ``r_bar**(n-a) * p_a`` inside.

    With an infinite cap the geometric law is truncated at ``n_max`` and the
    neglected tail, which must be below 1e-12, is folded back by renormalizing.
    """
    r_bar = solve_common_ratio(params)
    a = params.a
    size = params.size
    mass = np.zeros(size)
    if params.finite_cap:
        b = int(params.b)
        if r_bar == 1.0:
            p_a = 1.0 / (b - a + 1)
            mass[a : b + 1] = p_a
        else:
            weights = r_bar ** np.arange(b - a + 1, dtype=np.float64)
            p_a = float(1.0 / weights.sum())
            mass[a : b + 1] = weights * p_a
    else:
        p_a = 1.0 / (params.mu - a + 1)
        k = np.arange(size - a, dtype=np.float64)
        mass[a:] = p_a * r_bar**k
        tail = r_bar ** (size - a)
        if tail > TAIL_FOLD_TOL:
            raise TruncationTooSmall(
                f"equilibrium tail mass {tail:.2e} beyond n_max={params.n_max} exceeds "
                f"{TAIL_FOLD_TOL:g}; increase n_max",
                "n_max",
            )
    return EquilibriumDist(r_bar=r_bar, p_a=p_a, params=params), make_prob_mass(mass, params)
