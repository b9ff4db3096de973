"""Shared domain types, validation and seeding for the floor/cap BDY model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

# Unbounded wealth cap. Comparisons such as ``n < b`` or ``n <= b`` evaluate to
# the correct "always true / always false" answer against a float infinity.
INFINITE: float = math.inf

MASS_TOL = 1e-9
MEAN_TOL = 1e-6
ROOT_TOL = 1e-12


# =============================================================================
# Errors
# =============================================================================


class ModelError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ModelError, ValueError):
    """Bad input: a parameter or distribution violates its invariants.

    ``key`` names the offending configuration key when there is one.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class OrderViolation(ValidationError):
    pass


class TruncationTooSmall(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class MeanMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class ZeroMean(ValidationError):
    pass


class InadmissibleInitial(ValidationError):
    pass


class ComputationError(ModelError, RuntimeError):
    """A numerical or stochastic run could not proceed."""


class TailOverflow(ComputationError):
    pass


class NegativeMass(ComputationError):
    pass


class FrozenState(ComputationError):
    pass


class InfeasibleRepair(ComputationError):
    pass


class BracketFailure(ComputationError):
    pass


class Overflow(ComputationError, OverflowError):
    pass


class InvariantViolation(ComputationError):
    pass


# =============================================================================
# Parameters
# =============================================================================


def is_infinite(b: float) -> bool:
    return math.isinf(b)


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool):
        raise ValidationError(f"{key} must be an integer, got {value!r}", key)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValidationError(f"{key} must be an integer, got {value!r}", key)
        return int(value)
    try:
        return int(str(value).strip())
    except (TypeError, ValueError):
        raise ValidationError(f"{key} must be an integer, got {value!r}", key) from None


def parse_cap(value: Any) -> float | int:
    """Parse a wealth cap; ``inf``/``infinite``/``none`` map to :data:`INFINITE`."""
    if isinstance(value, float) and math.isinf(value):
        return INFINITE
    if isinstance(value, str) and value.strip().lower() in {"inf", "infinite", "infinity", "none"}:
        return INFINITE
    return _as_int(value, "b")


@dataclass(frozen=True)
class ModelParams:
    """Floor ``a``, cap ``b``, mean wealth ``mu`` plus population and truncation sizes.

    ``n_max`` is the largest wealth level represented in mean-field vectors.
    """

    a: int
    b: int | float
    mu: int
    n_agents: int | None = None
    n_max: int | None = None

    def __post_init__(self) -> None:
        if self.a < 0:
            raise ValidationError(f"a must be nonnegative, got a={self.a}", "a")
        if self.mu <= 0:
            raise ValidationError(f"mu must be a positive integer, got mu={self.mu}", "mu")
        if not self.a < self.mu:
            raise OrderViolation(
                f"requires a < mu < b, got a={self.a}, mu={self.mu}, b={_fmt_cap(self.b)}", "a"
            )
        if not self.mu < self.b:
            raise OrderViolation(
                f"requires a < mu < b, got a={self.a}, mu={self.mu}, b={_fmt_cap(self.b)}", "b"
            )
        if self.n_agents is not None and self.n_agents <= 0:
            raise ValidationError(f"n_agents must be positive, got {self.n_agents}", "n_agents")
        if self.n_max is None:
            if self.finite_cap:
                object.__setattr__(self, "n_max", int(self.b) + 2)
            else:
                raise TruncationTooSmall("b = inf requires an explicit finite n_max", "n_max")
        elif self.finite_cap and self.n_max < self.b + 2:
            raise TruncationTooSmall(
                f"n_max must be >= b + 2 = {int(self.b) + 2}, got {self.n_max}", "n_max"
            )
        elif self.n_max <= self.mu:
            raise TruncationTooSmall(f"n_max must exceed mu, got {self.n_max}", "n_max")

    @property
    def finite_cap(self) -> bool:
        return not is_infinite(self.b)

    @property
    def size(self) -> int:
        """Length of a mean-field state vector (levels 0..n_max)."""
        return int(self.n_max) + 1

    def replace(self, **changes: Any) -> ModelParams:
        fields = {"a": self.a, "b": self.b, "mu": self.mu, "n_agents": self.n_agents, "n_max": self.n_max}
        if "b" in changes and "n_max" not in changes:
            fields["n_max"] = None
        fields.update(changes)
        return ModelParams(**fields)


def _fmt_cap(b: float) -> str:
    return "inf" if is_infinite(b) else str(int(b))


def validate_params(raw: ModelParams | Mapping[str, Any]) -> ModelParams:
    """Build a :class:`ModelParams` from a mapping of raw values.

    Passing an existing ``ModelParams`` returns it unchanged.
    """
    if isinstance(raw, ModelParams):
        return raw
    for key in ("a", "b", "mu"):
        if raw.get(key) is None:
            raise ValidationError(f"missing required parameter {key}", key)
    n_agents = raw.get("n_agents")
    n_max = raw.get("n_max")
    return ModelParams(
        a=_as_int(raw["a"], "a"),
        b=parse_cap(raw["b"]),
        mu=_as_int(raw["mu"], "mu"),
        n_agents=None if n_agents is None else _as_int(n_agents, "n_agents"),
        n_max=None if n_max is None else _as_int(n_max, "n_max"),
    )


# =============================================================================
# Distributions
# =============================================================================


@dataclass(frozen=True)
class ProbMass:
    """Probability mass function on levels ``0..n_max``; the array is read-only."""

    mass: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.mass, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "mass", arr)

    @property
    def n_max(self) -> int:
        return len(self.mass) - 1

    @property
    def mean(self) -> float:
        return float(np.arange(len(self.mass)) @ self.mass)

    def __len__(self) -> int:
        return len(self.mass)


def as_array(p: ProbMass | ArrayLike) -> NDArray[np.float64]:
    if isinstance(p, ProbMass):
        return p.mass
    return np.asarray(p, dtype=np.float64)


def make_prob_mass(values: ArrayLike, params: ModelParams) -> ProbMass:
    """Pad ``values`` to ``n_max + 1`` levels, normalize and check mass and mean."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValidationError("probability masses must be finite and nonnegative")
    size = params.size
    if len(arr) > size:
        if np.any(arr[size:] > 0):
            raise TruncationTooSmall(
                f"mass found above n_max={params.n_max}", "n_max"
            )
        arr = arr[:size]
    elif len(arr) < size:
        arr = np.concatenate([arr, np.zeros(size - len(arr))])
    total = arr.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise NotNormalized(f"total mass is {total!r}, expected 1")
    arr = arr / total
    mean = float(np.arange(size) @ arr)
    if abs(mean - params.mu) > MEAN_TOL:
        raise MeanMismatch(f"mean is {mean!r}, expected mu={params.mu}", "mu")
    return ProbMass(arr)


def delta(level: int, params: ModelParams) -> ProbMass:
    """Point mass at ``level`` (``params.mu`` gives the standard initial datum)."""
    arr = np.zeros(params.size)
    arr[level] = 1.0
    return make_prob_mass(arr, params)


@dataclass(frozen=True)
class Rates:
    """Fraction of potential receivers (mass below b) and givers (mass above a)."""

    lambda_r: float
    lambda_g: float


@dataclass(frozen=True)
class EquilibriumDist:
    r_bar: float
    p_a: float
    params: ModelParams


# =============================================================================
# Seeding
# =============================================================================


def replica_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for sub-seed ``(seed, *key)``.

    Streams for distinct keys are statistically independent, and the same
    ``(seed, key)`` always reproduces the same draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
