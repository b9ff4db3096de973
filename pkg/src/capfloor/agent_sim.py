"""Exact continuous-time simulation of N agents exchanging single dollars.

Every ordered pair ``(i, j)`` with ``i != j`` carries an exponential clock of
rate ``1/N``; when it rings, ``i`` gives one dollar to ``j`` provided
``S_i > a`` and ``S_j < b``. The total rate is ``(G*R - M) / N`` with ``G``
givers (``S > a``), ``R`` receivers (``S < b``) and ``M`` agents that are
both.

Agents are kept sorted by wealth in a single permutation array with
per-level start offsets, so givers and receivers are contiguous ranges and
moving an agent one level costs one swap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    FrozenState,
    InfeasibleRepair,
    ModelParams,
    ProbMass,
    TruncationTooSmall,
    ValidationError,
    as_array,
)

_BATCH = 4096


@dataclass(frozen=True)
class AgentPopulation:
    """Wealth of every agent at simulated time ``time``; the array is read-only."""

    wealth: NDArray[np.int64]
    time: float = 0.0

    def __post_init__(self) -> None:
        arr = np.array(self.wealth, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "wealth", arr)

    @property
    def n_agents(self) -> int:
        return len(self.wealth)


@dataclass(frozen=True)
class ClassCounts:
    givers: int
    receivers: int
    middle: int


@dataclass(frozen=True)
class AllAtMean:
    pass


@dataclass(frozen=True)
class Sample:
    p: ProbMass | NDArray[np.float64]


InitSpec = AllAtMean | Sample


@dataclass
class EventLog:
    times: list[float] = field(default_factory=list)
    givers: list[int] = field(default_factory=list)
    receivers: list[int] = field(default_factory=list)

    def records(self) -> list[dict]:
        return [
            {"time": t, "giver": g, "receiver": r}
            for t, g, r in zip(self.times, self.givers, self.receivers)
        ]


# =============================================================================
# Initialization
# =============================================================================


def init_population(
    params: ModelParams,
    init: InitSpec = AllAtMean(),
    rng: np.random.Generator | None = None,
) -> AgentPopulation:
    """Initial wealth vector summing to exactly ``N * mu``.

    ``Sample(p)`` draws i.i.d. from ``p`` and then repairs the total. The
    repair first redraws single agents from ``p`` when that strictly reduces
    the surplus or deficit, then falls back to removing or adding single
    dollars at uniformly chosen agents.
    """
    n, mu = _n_agents(params), params.mu
    if isinstance(init, AllAtMean):
        return AgentPopulation(np.full(n, mu, dtype=np.int64))
    if rng is None:
        raise ValueError("Sample initialization needs an rng")
    probs = as_array(init.p)
    probs = probs / probs.sum()
    levels = np.arange(len(probs))
    wealth = rng.choice(levels, size=n, p=probs).astype(np.int64)
    target = n * mu
    gap = int(wealth.sum()) - target
    if abs(gap) > n * mu:
        raise InfeasibleRepair(f"sampled total is off by {gap}, more than N*mu = {target}")

    for _ in range(100 * n):
        if gap == 0:
            break
        i = int(rng.integers(n))
        new = int(rng.choice(levels, p=probs))
        new_gap = gap + new - int(wealth[i])
        if abs(new_gap) < abs(gap):
            wealth[i] = new
            gap = new_gap
    while gap > 0:
        rich = np.flatnonzero(wealth > 0)
        wealth[rich[rng.integers(len(rich))]] -= 1
        gap -= 1
    while gap < 0:
        wealth[rng.integers(n)] += 1
        gap += 1
    return AgentPopulation(wealth)


def _n_agents(params: ModelParams) -> int:
    if params.n_agents is None:
        raise ValidationError("agent simulation needs n_agents", "n_agents")
    return params.n_agents


# =============================================================================
# Rates and single events
# =============================================================================


def class_counts(pop: AgentPopulation, params: ModelParams) -> ClassCounts:
    w = pop.wealth
    giver = w > params.a
    receiver = w < params.b
    return ClassCounts(int(giver.sum()), int(receiver.sum()), int((giver & receiver).sum()))


def total_event_rate(pop: AgentPopulation, params: ModelParams) -> float:
    c = class_counts(pop, params)
    return (c.givers * c.receivers - c.middle) / pop.n_agents


def step_event(
    pop: AgentPopulation, params: ModelParams, rng: np.random.Generator
) -> tuple[AgentPopulation, float]:
    """Advance ``pop`` by one exchange; returns the new state and the waiting time.

    Copies the wealth vector, so use :class:`Exchange` for long runs.
    """
    rate = total_event_rate(pop, params)
    if rate <= 0:
        raise FrozenState("no eligible giver/receiver pair")
    dt = rng.exponential(1.0 / rate)
    w = pop.wealth
    givers = np.flatnonzero(w > params.a)
    receivers = np.flatnonzero(w < params.b)
    while True:
        i = givers[rng.integers(len(givers))]
        j = receivers[rng.integers(len(receivers))]
        if i != j:
            break
    new = w.copy()
    new[i] -= 1
    new[j] += 1
    return AgentPopulation(new, pop.time + dt), dt


# =============================================================================
# Simulation engine
# =============================================================================


class Exchange:
    """Mutable simulation state for one trajectory.

    ``order`` lists agents sorted by wealth; agents with wealth ``k`` occupy
    ``order[start[k]:start[k+1]]`` and ``pos[i]`` is agent ``i``'s slot.
    """

    def __init__(self, pop: AgentPopulation, params: ModelParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.time = float(pop.time)
        wealth = pop.wealth
        n = len(wealth)
        self.n = n
        if params.finite_cap:
            top = max(int(wealth.max()), int(params.b)) + 1
        else:
            top = int(wealth.sum()) + 1
        counts = np.bincount(wealth, minlength=top + 1)
        start = np.zeros(top + 2, dtype=np.int64)
        start[1:] = np.cumsum(counts)
        order = np.argsort(wealth, kind="stable")
        pos = np.empty(n, dtype=np.int64)
        pos[order] = np.arange(n)
        self.wealth: list[int] = wealth.tolist()
        self.order: list[int] = order.tolist()
        self.pos: list[int] = pos.tolist()
        self.start: list[int] = start.tolist()
        self.top = top
        # receivers are agents in slots [0, start[b_idx])
        self.b_idx = min(int(params.b), top + 1) if params.finite_cap else top + 1
        self.g_idx = min(params.a + 1, top + 1)
        self._exp: list[float] = []
        self._uni: list[float] = []

    def _draws(self) -> None:
        self._exp = self.rng.standard_exponential(_BATCH).tolist()
        self._uni = self.rng.random(2 * _BATCH).tolist()

    def counts(self) -> ClassCounts:
        g0, r1 = self.start[self.g_idx], self.start[self.b_idx]
        return ClassCounts(self.n - g0, r1, max(r1 - g0, 0))

    def rate(self) -> float:
        g0, r1 = self.start[self.g_idx], self.start[self.b_idx]
        givers, receivers = self.n - g0, r1
        return (givers * receivers - max(r1 - g0, 0)) / self.n

    def population(self) -> AgentPopulation:
        return AgentPopulation(np.array(self.wealth, dtype=np.int64), self.time)

    def histogram(self, size: int) -> NDArray[np.int64]:
        """Number of agents at each wealth level ``0..size-1``."""
        counts = np.diff(np.asarray(self.start, dtype=np.int64))
        if len(counts) > size and counts[size:].any():
            raise TruncationTooSmall(f"agent wealth exceeds n_max={size - 1}", "n_max")
        out = np.zeros(size, dtype=np.int64)
        m = min(size, len(counts))
        out[:m] = counts[:m]
        return out

    def run(
        self,
        t_end: float,
        sample_times: Sequence[float] = (),
        on_sample=None,
        log: EventLog | None = None,
    ) -> None:
        """Fire exchanges until the next one would happen after ``t_end``.

        ``on_sample(t)`` is called at each sample time with the state as it
        was just before ``t``.
        """
        samples = sorted(float(s) for s in sample_times)
        k = 0
        n = self.n
        wealth, order, pos, start = self.wealth, self.order, self.pos, self.start
        g_idx, b_idx = self.g_idx, self.b_idx
        exp, uni = self._exp, self._uni
        t = self.time
        while True:
            g0 = start[g_idx]
            r1 = start[b_idx]
            givers = n - g0
            middle = r1 - g0 if r1 > g0 else 0
            rate = (givers * r1 - middle) / n
            if rate <= 0:
                t_next = float("inf")
            else:
                if not exp:
                    self._draws()
                    exp, uni = self._exp, self._uni
                t_next = t + exp.pop() / rate
            while k < len(samples) and samples[k] < t_next and samples[k] <= t_end:
                self.time = samples[k]
                if on_sample is not None:
                    on_sample(samples[k])
                k += 1
            if t_next > t_end:
                break
            t = t_next
            # uniform giver among slots [g0, n), receiver among [0, r1), redraw i == j
            while True:
                if len(uni) < 2:
                    self._draws()
                    exp, uni = self._exp, self._uni
                i = order[g0 + int(uni.pop() * givers)]
                j = order[int(uni.pop() * r1)]
                if i != j:
                    break
            # giver moves down: swap into the first slot of its level, shift boundary up
            wi = wealth[i]
            s = start[wi]
            other = order[s]
            pi = pos[i]
            order[s], order[pi] = i, other
            pos[i], pos[other] = s, pi
            start[wi] = s + 1
            wealth[i] = wi - 1
            # receiver moves up: swap into the last slot of its level, shift boundary down
            wj = wealth[j]
            e = start[wj + 1] - 1
            other = order[e]
            pj = pos[j]
            order[e], order[pj] = j, other
            pos[j], pos[other] = e, pj
            start[wj + 1] = e
            wealth[j] = wj + 1
            if log is not None:
                log.times.append(t)
                log.givers.append(i)
                log.receivers.append(j)
        self._exp, self._uni = exp, uni
        self.time = max(t, float(t_end))


def simulate_until(
    pop: AgentPopulation,
    params: ModelParams,
    t_end: float,
    rng: np.random.Generator,
    sample_times: Sequence[float] | None = None,
    log: EventLog | None = None,
) -> list[tuple[float, AgentPopulation]]:
    """Run from ``pop`` to ``t_end`` and snapshot the population at each sample time.

    Without ``sample_times`` only the state at ``t_end`` is returned. A state
    with no eligible pair simply stays put.
    """
    if t_end < pop.time:
        raise ValueError(f"t_end={t_end} precedes the population time {pop.time}")
    if sample_times is None:
        sample_times = [t_end]
    engine = Exchange(pop, params, rng)
    snaps: list[tuple[float, AgentPopulation]] = []
    engine.run(t_end, sample_times, lambda t: snaps.append((t, engine.population())), log)
    return snaps


def empirical_distribution(pop: AgentPopulation | ArrayLike, n_max: int) -> ProbMass:
    wealth = pop.wealth if isinstance(pop, AgentPopulation) else np.asarray(pop, dtype=np.int64)
    if wealth.max(initial=0) > n_max:
        raise TruncationTooSmall(f"agent wealth {wealth.max()} exceeds n_max={n_max}", "n_max")
    return ProbMass(np.bincount(wealth, minlength=n_max + 1) / len(wealth))


def simulate_empirical(
    params: ModelParams,
    t: float,
    rng: np.random.Generator,
    init: InitSpec = AllAtMean(),
) -> NDArray[np.float64]:
    """Empirical distribution (levels ``0..n_max``) of one trajectory at time ``t``."""
    pop = init_population(params, init, rng)
    engine = Exchange(pop, params, rng)
    out: list[NDArray] = []
    engine.run(t, [t], lambda _: out.append(engine.histogram(params.size)))
    return out[0] / engine.n


def simulate_thinning(
    pop: AgentPopulation, params: ModelParams, t_end: float, rng: np.random.Generator
) -> AgentPopulation:
    """Same dynamics by thinning: a rate-N clock proposes a uniform ordered pair
    ``(i, j)`` that fires only when ``i != j`` and the pair is eligible.

    Slow; kept as an independent cross-check of :class:`Exchange`.
    """
    w = pop.wealth.copy()
    n = len(w)
    t = pop.time
    while True:
        t += rng.exponential(1.0 / n)
        if t > t_end:
            break
        i, j = rng.integers(n, size=2)
        if i != j and w[i] > params.a and w[j] < params.b:
            w[i] -= 1
            w[j] += 1
    return AgentPopulation(w, t_end)
