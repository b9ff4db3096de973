"""Numerical studies: convergence to equilibrium, N-scaling of the particle
error, Gini comparisons across floors and caps, and an exact small-N check of
the finite-population generator."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .agent_sim import AgentPopulation, simulate_empirical, total_event_rate
from .core import (
    INFINITE,
    InvariantViolation,
    ModelParams,
    delta,
    is_infinite,
    replica_rng,
)
from .diagnostics import (
    boltzmann_h,
    gini,
    h_ab,
    h_ab_tilde,
    l1_distance,
    lyapunov_constants,
)
from .equilibrium import equilibrium_distribution
from .meanfield import apply_generator_D, rk4_integrate

MONOTONE_TOL = 1e-9
GINI_ORDER_TOL = 1e-12


def worker_count(workers: int | None = None) -> int:
    """Explicit ``workers``, else ``$BDY_THREADS``, else the machine's CPU count."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("BDY_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parallel_map(fn: Callable, tasks: Sequence, workers: int) -> list:
    # executor.map yields in submission order, so the reduction order is fixed
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def fit_log_linear(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit of ``log y`` against ``x``; returns ``(slope, intercept, r)``."""
    res = stats.linregress(np.asarray(x, dtype=float), np.log(np.asarray(y, dtype=float)))
    return float(res.slope), float(res.intercept), float(res.rvalue)


# =============================================================================
# Convergence to equilibrium
# =============================================================================


@dataclass
class ConvergenceResult:
    records: list[dict[str, float]]
    rate: float
    correlation: float
    final_distance: float


def run_convergence_study(
    params: ModelParams,
    dt: float = 0.01,
    t_end: float = 5.0,
    sample_times: Sequence[float] | None = None,
    fit_window: tuple[float, float] = (1e-8, 1e-1),
) -> ConvergenceResult:
    """Integrate from the point mass at ``mu`` and track the l1 distance to ``p*``.

    The exponential rate is fitted on samples whose distance lies inside
    ``fit_window``; ``rate`` and ``correlation`` are nan when fewer than three
    samples qualify.
    """
    _, p_star = equilibrium_distribution(params)
    p0 = delta(params.mu, params)
    traj = rk4_integrate(p0, params, t_end, dt, sample_times)
    k1, k2 = lyapunov_constants(params, p0) if params.finite_cap else (0.0, 0.0)
    records = []
    for t, state in zip(traj.times, traj.states):
        records.append(
            {
                "time": float(t),
                "l1_to_equilibrium": l1_distance(state, p_star),
                "H": boltzmann_h(state),
                "H_ab": h_ab(state, params),
                "H_ab_tilde": h_ab_tilde(state, params, k1, k2),
                "gini": gini(state),
            }
        )
    dist = np.array([r["l1_to_equilibrium"] for r in records])
    lo, hi = fit_window
    mask = (dist >= lo) & (dist <= hi)
    if mask.sum() >= 3:
        slope, _, corr = fit_log_linear(traj.times[mask], dist[mask])
        rate = -slope
    else:
        rate = corr = float("nan")
    return ConvergenceResult(records, rate, corr, float(dist[-1]))


# =============================================================================
# Propagation of chaos
# =============================================================================


@dataclass
class PocRow:
    n_agents: int
    replicas: int
    mean_error: float
    std_error: float


@dataclass
class PocResult:
    rows: list[PocRow]
    slope: float
    slope_half_width: float

    def records(self) -> list[dict[str, Any]]:
        return [vars(r).copy() for r in self.rows]


def _poc_replica(task: tuple) -> float:
    params, t, seed, n_agents, r, reference = task
    emp = simulate_empirical(params.replace(n_agents=n_agents, n_max=params.n_max), t, replica_rng(seed, n_agents, r))
    return float(np.abs(emp - reference).sum())


def run_poc_study(
    params: ModelParams,
    n_list: Sequence[int],
    t: float = 1.0,
    replicas: int = 200,
    seed: int = 0,
    dt: float = 0.01,
    workers: int | None = None,
) -> PocResult:
    """Mean l1 error between particle and mean-field distributions at time ``t``.

    Every replica starts with all agents at ``mu``, so the initial error is
    zero. Replica ``r`` of population ``N`` uses the stream ``(seed, N, r)``.
    The slope of log error against log N comes with a 95% half-width.
    """
    n_list = [int(n) for n in n_list]
    if any(n < 10 for n in n_list):
        raise ValueError("every population size must be at least 10")
    if sorted(set(n_list)) != n_list:
        raise ValueError("population sizes must be strictly increasing")
    if t <= 0:
        raise ValueError("t must be positive")
    reference = rk4_integrate(delta(params.mu, params), params, t, dt, [t]).states[-1]
    tasks = [(params, t, seed, n, r, reference) for n in n_list for r in range(replicas)]
    errors = np.array(_parallel_map(_poc_replica, tasks, worker_count(workers))).reshape(len(n_list), replicas)

    rows = []
    for n, errs in zip(n_list, errors):
        sd = float(errs.std(ddof=1)) if replicas > 1 else 0.0
        rows.append(PocRow(n, replicas, float(errs.mean()), sd / math.sqrt(replicas)))
    if len(n_list) >= 2:
        fit = stats.linregress(np.log(n_list), np.log([r.mean_error for r in rows]))
        dof = len(n_list) - 2
        half = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else float("nan")
        slope = float(fit.slope)
    else:
        slope = half = float("nan")
    return PocResult(rows, slope, half)


# =============================================================================
# Gini sweep
# =============================================================================


@dataclass
class SweepResult:
    """Gini trajectories on an ``(a, b)`` grid plus monotonicity findings.

    ``violations`` lists every sample time at which the Gini index failed to be
    non-increasing in ``a`` or non-decreasing in ``b``. Only
    ``proven_violations`` (uncapped equilibria ordered by floor) mark a failure.
    """

    mu: int
    records: list[dict[str, Any]]
    equilibrium_gini: dict[tuple[int, float], float]
    violations: list[dict[str, Any]] = field(default_factory=list)
    final_violations: list[dict[str, Any]] = field(default_factory=list)
    proven_violations: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.proven_violations

    def final_gini(self) -> dict[tuple[int, float], float]:
        last = max(r["time"] for r in self.records)
        return {(r["a"], r["b"]): r["gini"] for r in self.records if r["time"] == last}


def _order_violations(
    values: dict[tuple[int, float], float], a_list: Sequence[int], b_list: Sequence[float], time: float
) -> list[dict[str, Any]]:
    out = []
    for b in b_list:
        col = [(a, values[(a, b)]) for a in a_list if (a, b) in values]
        for (a0, g0), (a1, g1) in zip(col, col[1:]):
            if g1 > g0 + GINI_ORDER_TOL:
                out.append({"time": time, "kind": "increasing_in_a", "b": b, "a_low": a0, "a_high": a1,
                            "gini_low": g0, "gini_high": g1})
    for a in a_list:
        row = [(b, values[(a, b)]) for b in b_list if (a, b) in values]
        for (b0, g0), (b1, g1) in zip(row, row[1:]):
            if g1 < g0 - GINI_ORDER_TOL:
                out.append({"time": time, "kind": "decreasing_in_b", "a": a, "b_low": b0, "b_high": b1,
                            "gini_low": g0, "gini_high": g1})
    return out


def _sweep_point(task: tuple) -> tuple[list[float], list[float]]:
    params, dt, t_end, samples = task
    p0 = delta(params.mu, params)
    traj = rk4_integrate(p0, params, t_end, dt)
    if params.finite_cap:
        k1, k2 = lyapunov_constants(params, p0)
        h = np.array([h_ab_tilde(s, params, k1, k2) for s in traj.states])
        rise = float(np.diff(h).max(initial=-np.inf))
        if rise > MONOTONE_TOL:
            raise InvariantViolation(f"generalized entropy rose by {rise:.3e} for {params}")
    idx = [int(np.argmin(np.abs(traj.times - s))) for s in samples]
    return [float(traj.times[i]) for i in idx], [gini(traj.states[i]) for i in idx]


def run_gini_sweep(
    mu: int,
    a_list: Sequence[int],
    b_list: Sequence[float],
    dt: float = 0.1,
    t_end: float = 100.0,
    sample_times: Sequence[float] | None = None,
    n_max: int | None = None,
    workers: int | None = None,
) -> SweepResult:
    """One mean-field trajectory from the point mass at ``mu`` per ``(a, b)`` pair.

    ``sample_times`` must lie on the ``dt`` grid; default is every unit of time.
    An infinite cap needs ``n_max``. Each trajectory is checked inline for a
    non-increasing generalized entropy (finite caps).
    """
    a_list = sorted(int(a) for a in a_list)
    b_list = sorted(b_list)
    if sample_times is None:
        sample_times = np.arange(0.0, t_end + 1e-9, 1.0)
    grid = [ModelParams(a, b, mu, n_max=n_max if (n_max is not None or is_infinite(b)) else None)
            for a, b in itertools.product(a_list, b_list)]
    results = _parallel_map(_sweep_point, [(p, dt, t_end, list(sample_times)) for p in grid], worker_count(workers))

    records = []
    per_time: dict[float, dict[tuple[int, float], float]] = {}
    for params, (times, ginis) in zip(grid, results):
        for t, g in zip(times, ginis):
            records.append({"a": params.a, "b": params.b, "time": t, "gini": g})
            per_time.setdefault(t, {})[(params.a, params.b)] = g
    eq = {(p.a, p.b): gini(equilibrium_distribution(p)[1]) for p in grid}

    violations = []
    for t in sorted(per_time):
        violations.extend(_order_violations(per_time[t], a_list, b_list, t))
    last = max(per_time)
    final = [v for v in violations if v["time"] == last]
    proven = [
        v | {"time": math.inf}
        for v in _order_violations(eq, a_list, [b for b in b_list if is_infinite(b)], math.inf)
        if v["kind"] == "increasing_in_a"
    ]
    return SweepResult(mu, records, eq, violations, final, proven)


# =============================================================================
# Generator oracle
# =============================================================================


@dataclass
class OracleReport:
    cases: list[dict[str, Any]]
    max_discrepancy: float
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_discrepancy < self.tolerance


def _configurations(n: int, total: int) -> Iterable[tuple[int, ...]]:
    """All ordered wealth vectors of ``n`` agents summing to ``total``."""
    if n == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _configurations(n - 1, total - first):
            yield (first,) + rest


def generator_discrepancy(params: ModelParams) -> tuple[int, float]:
    """Compare the exact drift of the empirical measure with ``L + R/N``.

    Enumerates every configuration of ``params.n_agents`` agents with total
    ``N * mu``, builds the jump rates of the exchange chain pair by pair and
    returns ``(number of states, max |discrepancy|)``.
    """
    n = params.n_agents
    size = params.size
    states = list(_configurations(n, n * params.mu))
    index = {s: k for k, s in enumerate(states)}
    emp = np.zeros((len(states), size))
    for k, s in enumerate(states):
        for w in s:
            emp[k, w] += 1.0 / n
    Q = np.zeros((len(states), len(states)))
    for k, s in enumerate(states):
        for i, j in itertools.permutations(range(n), 2):
            if s[i] > params.a and s[j] < params.b:
                t = list(s)
                t[i] -= 1
                t[j] += 1
                Q[k, index[tuple(t)]] += 1.0 / n
        Q[k, k] = -Q[k].sum()
        expected_rate = total_event_rate(AgentPopulation(np.array(s)), params)
        if abs(-Q[k, k] - expected_rate) > 1e-12:
            raise InvariantViolation(f"pair enumeration disagrees with the event rate at {s}")
    drift = Q @ emp
    worst = 0.0
    for k in range(len(states)):
        worst = max(worst, float(np.abs(drift[k] - apply_generator_D(emp[k], params, n)).max()))
    return len(states), worst


def run_generator_oracle(max_total_wealth: int = 6) -> OracleReport:
    """Exact generator check for N in {2, 3} and every valid ``(a, mu, b)`` with
    ``N * mu <= max_total_wealth``; ``b`` ranges over every cap that can bind
    plus an infinite cap."""
    if max_total_wealth > 8:
        raise ValueError("max_total_wealth above 8 makes the enumeration too large")
    cases = []
    for n in (2, 3):
        for mu in range(1, max_total_wealth // n + 1):
            total = n * mu
            n_max = total + 3
            for a in range(mu):
                for b in [*range(mu + 1, total + 2), INFINITE]:
                    params = ModelParams(a, b, mu, n_agents=n, n_max=n_max)
                    n_states, worst = generator_discrepancy(params)
                    cases.append({"n_agents": n, "a": a, "mu": mu, "b": b,
                                  "states": n_states, "max_discrepancy": worst})
    return OracleReport(cases, max((c["max_discrepancy"] for c in cases), default=0.0))
