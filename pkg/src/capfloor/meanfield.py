"""Mean-field ODE for the floor/cap BDY model on a truncated state space.

The state is a probability vector ``p[0..n_max]``. Mass flows down one level
at rate ``lambda_r`` from every level above the floor ``a`` and up one level
at rate ``lambda_g`` from every level below the cap ``b``. The top level
``n_max`` never passes mass upward (zero-flux truncation); for a finite cap
with ``n_max >= b + 2`` this is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    MASS_TOL,
    MEAN_TOL,
    InvariantViolation,
    ModelParams,
    NegativeMass,
    Overflow,
    ProbMass,
    Rates,
    TailOverflow,
    as_array,
)

TAIL_TOL = 1e-6
NEGATIVE_TOL = 1e-10


def _receiver_window(params: ModelParams, size: int) -> int:
    """Number of leading levels whose agents may receive (``n < b``, ``n < n_max``)."""
    return min(params.b, size - 1) if params.finite_cap else size - 1


def rates(p: ProbMass | ArrayLike, params: ModelParams) -> Rates:
    arr = as_array(p)
    lam_r = float(arr[: int(min(params.b, len(arr)))].sum()) if params.finite_cap else float(arr.sum())
    lam_g = float(arr[params.a + 1 :].sum())
    return Rates(min(max(lam_r, 0.0), 1.0), min(max(lam_g, 0.0), 1.0))


def _check_tail(arr: NDArray[np.float64], params: ModelParams) -> None:
    if not params.finite_cap and arr[-1] > TAIL_TOL:
        raise TailOverflow(
            f"mass {arr[-1]:.3e} at n_max={len(arr) - 1} exceeds {TAIL_TOL:g}; increase n_max"
        )


def _L(arr: NDArray[np.float64], params: ModelParams) -> NDArray[np.float64]:
    a = params.a
    size = len(arr)
    top = _receiver_window(params, size)
    lam_r = arr[:top].sum() if params.finite_cap else arr.sum()
    lam_g = arr[a + 1 :].sum()
    out = np.zeros(size)
    # givers at n >= a+1 drop to n-1
    out[a:-1] += lam_r * arr[a + 1 :]
    out[a + 1 :] -= lam_r * arr[a + 1 :]
    # receivers at n <= min(b, n_max) - 1 rise to n+1
    out[1 : top + 1] += lam_g * arr[:top]
    out[:top] -= lam_g * arr[:top]
    return out


def apply_L(p: ProbMass | ArrayLike, params: ModelParams) -> NDArray[np.float64]:
    """Right-hand side of the mean-field ODE, ``dp/dt = L[p]``."""
    arr = as_array(p)
    _check_tail(arr, params)
    return _L(arr, params)


def apply_R(p: ProbMass | ArrayLike, params: ModelParams) -> NDArray[np.float64]:
    """Order-1/N correction of the finite-population generator.

    ``R[p]_k = 2 p_k 1{a+1<=k<=b-1} - p_{k-1} 1{a+2<=k<=b} - p_{k+1} 1{a<=k<=b-2}``
    """
    arr = as_array(p)
    size = len(arr)
    a, b = params.a, params.b
    k = np.arange(size)
    prev = np.concatenate([[0.0], arr[:-1]])
    nxt = np.concatenate([arr[1:], [0.0]])
    return (
        2.0 * arr * ((a + 1 <= k) & (k <= b - 1))
        - prev * ((a + 2 <= k) & (k <= b))
        - nxt * ((a <= k) & (k <= b - 2))
    )


def apply_generator_D(p: ProbMass | ArrayLike, params: ModelParams, n_agents: int) -> NDArray[np.float64]:
    """Expected drift of the N-agent empirical measure, ``L[p] + R[p] / N``."""
    return apply_L(p, params) + apply_R(p, params) / n_agents


def exponential_moment(p: ProbMass | ArrayLike, K: float = 2.0) -> float:
    """``sum_n K**n p_n``. Raises :class:`Overflow` if the value is not representable."""
    if K <= 1:
        raise ValueError(f"K must exceed 1, got {K}")
    arr = as_array(p)
    nz = np.nonzero(arr)[0]
    with np.errstate(over="ignore"):
        value = float(np.sum(arr[nz] * np.power(float(K), nz.astype(np.float64))))
    if not np.isfinite(value):
        raise Overflow(
            f"exponential moment exp({log_exponential_moment(arr, K):.1f}) overflows; "
            "use log_exponential_moment"
        )
    return value


def log_exponential_moment(p: ProbMass | ArrayLike, K: float = 2.0) -> float:
    arr = as_array(p)
    nz = np.nonzero(arr > 0)[0]
    if len(nz) == 0:
        return -np.inf
    logs = nz * np.log(K) + np.log(arr[nz])
    m = logs.max()
    return float(m + np.log(np.exp(logs - m).sum()))


def moment_bound(params: ModelParams, p0: ProbMass | ArrayLike, K: float = 2.0) -> float:
    """Uniform-in-time bound on ``sum K**n p_n(t)`` for a finite cap."""
    return max(
        (K ** (params.b + 1) + K**params.a) / (1.0 - params.mu / params.b),
        exponential_moment(p0, K),
    )


# =============================================================================
# Time integration
# =============================================================================


@dataclass(frozen=True)
class Trajectory:
    """Recorded mean-field states; ``states[i]`` is the vector at ``times[i]``."""

    times: NDArray[np.float64]
    states: NDArray[np.float64]
    tail_mass: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> ProbMass:
        return ProbMass(self.states[i])

    @property
    def final(self) -> ProbMass:
        return ProbMass(self.states[-1])


def _time_grid(t0: float, t_end: float, dt: float, sample_times: Iterable[float] | None) -> tuple[NDArray, NDArray]:
    """Integration nodes and a mask of nodes to record.

    Nodes are the regular grid ``t0 + k*dt`` merged with any requested sample
    times; samples off the grid get a shortened step.
    """
    n_steps = int(np.floor((t_end - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(n_steps + 1)
    if grid[-1] < t_end - 1e-12 * max(1.0, t_end):
        grid = np.append(grid, t_end)
    if sample_times is None:
        return grid, np.ones(len(grid), dtype=bool)
    samples = np.asarray(sorted(set(float(s) for s in sample_times)), dtype=np.float64)
    if len(samples) and (samples[0] < t0 - 1e-12 or samples[-1] > t_end + 1e-12):
        raise ValueError("sample times must lie within [0, t_end]")
    # snap samples that coincide with grid nodes up to rounding
    idx = np.searchsorted(grid, samples)
    snapped = []
    for s, i in zip(samples, idx):
        near = [j for j in (i - 1, i) if 0 <= j < len(grid) and abs(grid[j] - s) <= 1e-9 * max(1.0, abs(s))]
        snapped.append(grid[near[0]] if near else s)
    nodes = np.union1d(grid, snapped)
    record = np.isin(nodes, snapped)
    return nodes, record


def rk4_integrate(
    p0: ProbMass | ArrayLike,
    params: ModelParams,
    t_end: float,
    dt: float = 0.01,
    sample_times: Sequence[float] | None = None,
) -> Trajectory:
    """Classic fourth-order Runge-Kutta on ``dp/dt = L[p]`` from time 0.

    After each step tiny negative entries are clipped and the vector is
    renormalized; an entry below ``-1e-10`` raises :class:`NegativeMass`.
    Without ``sample_times`` every step is recorded.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    p = np.array(as_array(p0), dtype=np.float64)
    if len(p) != params.size:
        raise ValueError(f"initial state has {len(p)} levels, expected n_max + 1 = {params.size}")
    _check_tail(p, params)
    levels = np.arange(len(p), dtype=np.float64)
    mean0 = float(levels @ p)

    nodes, record = _time_grid(0.0, float(t_end), float(dt), sample_times)
    times, states, tails = [], [], []

    def keep(t: float, state: NDArray) -> None:
        if abs(state.sum() - 1.0) > MASS_TOL:
            raise InvariantViolation(f"mass drifted to {state.sum()!r} at t={t}")
        # with an infinite cap the mean leaks through n_max; the tail check covers it
        if params.finite_cap and abs(levels @ state - mean0) > MEAN_TOL:
            raise InvariantViolation(f"mean drifted to {levels @ state!r} at t={t}")
        times.append(t)
        states.append(state.copy())
        tails.append(state[-1])

    if record[0]:
        keep(nodes[0], p)
    for i in range(1, len(nodes)):
        h = nodes[i] - nodes[i - 1]
        k1 = _L(p, params)
        k2 = _L(p + 0.5 * h * k1, params)
        k3 = _L(p + 0.5 * h * k2, params)
        k4 = _L(p + h * k3, params)
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        low = p.min()
        if low < 0.0:
            if low < -NEGATIVE_TOL:
                raise NegativeMass(f"component reached {low:.3e} at t={nodes[i]:.6g}; reduce dt")
            np.maximum(p, 0.0, out=p)
        p /= p.sum()
        _check_tail(p, params)
        if record[i]:
            keep(nodes[i], p)

    return Trajectory(np.array(times), np.array(states), np.array(tails))
