"""Command-line entry point: ``capfloor <subcommand> [flags]``.

Every subcommand accepts ``--config FILE``, a flat YAML mapping with keys such
as ``a``, ``b``, ``mu``, ``n_agents``, ``n_max``, ``seed``, ``t_end`` and
``dt``. Flags given on the command line override values from the file.

Exit status is 0 on success, 1 for invalid input or usage and 2 when a run
fails (tail overflow, negative mass, I/O errors, ...).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from . import experiments
from .agent_sim import Exchange, EventLog, init_population
from .core import (
    ComputationError,
    ModelParams,
    ValidationError,
    delta,
    is_infinite,
    make_prob_mass,
    parse_cap,
    replica_rng,
    validate_params,
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
from .meanfield import exponential_moment, rates, rk4_integrate

CONFIG_KEYS = {
    "a", "b", "mu", "n_agents", "n_max", "seed", "t_end", "dt", "samples", "init",
    "n_list", "replicas", "t", "a_list", "b_list", "max_total_wealth", "workers",
}

# defaults are the reference setups: convergence, particle scaling, Gini sweep
DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"a": 5, "b": 10, "mu": 7, "n_agents": 1000, "t_end": 1.0, "seed": 0, "samples": 11},
    "meanfield": {"a": 5, "b": 10, "mu": 7, "t_end": 5.0, "dt": 0.01, "samples": 11, "init": "delta"},
    "equilibrium": {"a": 5, "b": 10, "mu": 7},
    "diagnose": {"a": 5, "b": 10, "mu": 7},
    "convergence": {"a": 5, "b": 10, "mu": 7, "t_end": 5.0, "dt": 0.01, "samples": 501},
    "poc": {"a": 5, "b": 10, "mu": 7, "n_list": [100, 400, 1600, 6400], "t": 1.0, "replicas": 200,
            "seed": 0, "dt": 0.01},
    "gini-sweep": {"mu": 5, "a_list": [0, 1, 2, 3, 4], "b_list": [6, 8, 10, 15], "dt": 0.1, "t_end": 100.0},
    "generator-oracle": {"max_total_wealth": 6},
}


# =============================================================================
# CSV output
# =============================================================================


def _render(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def emit_csv(records: Iterable[Mapping[str, Any]], path: str | Path, fieldnames: Sequence[str] | None = None) -> None:
    """Write homogeneous records as CSV: header, then one row per record.

    Floats use 17 significant digits so they read back bit-for-bit.
    """
    records = list(records)
    if fieldnames is None:
        if not records:
            raise ValueError("fieldnames are required for an empty record list")
        fieldnames = list(records[0].keys())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for rec in records:
            writer.writerow([_render(rec[k]) for k in fieldnames])


def _kept_levels(values: np.ndarray, b: float) -> np.ndarray:
    levels = np.arange(len(values))
    keep = values > 0
    if not is_infinite(b):
        keep |= levels <= b + 1
    return levels[keep]


def state_records(time: float | None, values: np.ndarray, b: float, column: str = "p_n") -> list[dict[str, Any]]:
    """Long-format rows for one state: every level with positive value plus ``n <= b + 1``."""
    rows = []
    for n in _kept_levels(values, b):
        row = {} if time is None else {"time": time}
        row["n"] = int(n)
        row[column] = values[n]
        rows.append(row)
    return rows


def read_states_csv(path: str | Path, n_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``time,n,p_n`` (or ``time,n,count``) file back into ``(times, states)``.

    Count files are normalized per time. Missing levels are zero.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros(0), np.zeros((0, (n_max or 0) + 1))
    column = "p_n" if "p_n" in rows[0] else "count"
    if column not in rows[0] or "n" not in rows[0]:
        raise ValidationError(f"{path}: expected columns time,n,p_n or time,n,count")
    top = max(int(r["n"]) for r in rows)
    size = max(top, n_max or 0) + 1
    times = sorted({float(r.get("time", 0.0)) for r in rows})
    index = {t: k for k, t in enumerate(times)}
    states = np.zeros((len(times), size))
    for r in rows:
        states[index[float(r.get("time", 0.0))], int(r["n"])] = float(r[column])
    if column == "count":
        states /= states.sum(axis=1, keepdims=True)
    return np.array(times), states


# =============================================================================
# Configuration
# =============================================================================


@dataclass
class RunConfig:
    """Defaults, then config-file values, then command-line flags."""

    command: str
    values: dict[str, Any] = field(default_factory=dict)
    out: Path | None = None

    def params(self, **extra: Any) -> ModelParams:
        raw = {k: self.values.get(k) for k in ("a", "b", "mu", "n_agents", "n_max")}
        raw.update(extra)
        return validate_params(raw)

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)


def load_config_file(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse config file {path}: {exc}".replace("\n", " "), "config") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must hold a flat key-value mapping", "config")
    for key, value in data.items():
        if key not in CONFIG_KEYS:
            raise ValidationError(f"unknown config key {key!r}", str(key))
        if isinstance(value, dict):
            raise ValidationError(f"config key {key!r} must not be nested", str(key))
    return data


def build_config(command: str, ns: argparse.Namespace, defaults_key: str | None = None) -> RunConfig:
    values = dict(DEFAULTS.get(defaults_key or command, {}))
    if getattr(ns, "config", None):
        values.update(load_config_file(ns.config))
    for key, value in vars(ns).items():
        if key in CONFIG_KEYS and value is not None:
            values[key] = value
    out = getattr(ns, "out", None)
    return RunConfig(command, values, Path(out) if out else None)


def _int_list(value: Any, key: str) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        raise ValidationError(f"{key} must be a list of integers, got {value!r}", key) from None


def _cap_list(value: Any) -> list[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return [parse_cap(v) for v in value]


def _float(value: Any, key: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{key} must be a number, got {value!r}", key) from None


def _int(value: Any, key: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{key} must be an integer, got {value!r}", key) from None


def _sample_times(cfg: RunConfig, t_end: float) -> list[float]:
    count = _int(cfg.get("samples", 11), "samples")
    if count < 1:
        raise ValidationError("samples must be at least 1", "samples")
    if count == 1:
        return [t_end]
    return [float(t) for t in np.linspace(0.0, t_end, count)]


# =============================================================================
# Subcommands
# =============================================================================


def cmd_simulate(cfg: RunConfig, ns: argparse.Namespace) -> None:
    params = cfg.params()
    if params.n_agents is None:
        raise ValidationError("simulate needs n_agents", "n_agents")
    t_end = _float(cfg.get("t_end"), "t_end")
    seed = _int(cfg.get("seed", 0), "seed")
    rng = replica_rng(seed, 0)
    pop = init_population(params)
    engine = Exchange(pop, params, rng)
    log = EventLog() if ns.event_log else None
    records: list[dict[str, Any]] = []
    size = max(len(engine.start) - 1, params.size)

    def snap(t: float) -> None:
        records.extend(state_records(t, engine.histogram(size), params.b, "count"))

    engine.run(t_end, _sample_times(cfg, t_end), snap, log)
    if cfg.out:
        emit_csv(records, cfg.out, ["time", "n", "count"])
    if log is not None:
        emit_csv(log.records(), ns.event_log, ["time", "giver", "receiver"])


def _initial_state(cfg: RunConfig, params: ModelParams):
    init = str(cfg.get("init", "delta"))
    if init == "delta":
        return delta(params.mu, params)
    if init.startswith("csv:"):
        times, states = read_states_csv(init[4:], params.n_max)
        if len(times) == 0:
            raise ValidationError(f"{init[4:]} holds no states", "init")
        return make_prob_mass(states[0], params)
    raise ValidationError(f"init must be 'delta' or 'csv:<path>', got {init!r}", "init")


def cmd_meanfield(cfg: RunConfig, ns: argparse.Namespace) -> None:
    params = cfg.params()
    t_end = _float(cfg.get("t_end"), "t_end")
    dt = _float(cfg.get("dt"), "dt")
    p0 = _initial_state(cfg, params)
    traj = rk4_integrate(p0, params, t_end, dt, _sample_times(cfg, t_end))
    records = []
    for t, state in zip(traj.times, traj.states):
        records.extend(state_records(float(t), state, params.b))
    if cfg.out:
        emit_csv(records, cfg.out, ["time", "n", "p_n"])


def cmd_equilibrium(cfg: RunConfig, ns: argparse.Namespace) -> None:
    params = cfg.params()
    eq, p_star = equilibrium_distribution(params)
    if cfg.out:
        emit_csv(state_records(None, p_star.mass, params.b), cfg.out, ["n", "p_n"])
    print(f"r_bar={eq.r_bar!r},p_a={eq.p_a!r},gini={gini(p_star)!r}")


METRIC_COLUMNS = ["time", "H", "H_ab", "H_ab_tilde", "gini", "lambda_r", "lambda_g",
                  "exp_moment_2", "l1_to_equilibrium"]


def diagnose_states(times: np.ndarray, states: np.ndarray, params: ModelParams) -> list[dict[str, Any]]:
    """Metric rows for a sequence of states; the Lyapunov weights use the first state.

    With an infinite cap and ``a > 0`` the weights are undefined and
    ``H_ab_tilde`` is reported as nan.
    """
    params = params.replace(n_max=max(params.n_max, states.shape[1] - 1))
    if states.shape[1] < params.size:
        states = np.pad(states, ((0, 0), (0, params.size - states.shape[1])))
    _, p_star = equilibrium_distribution(params)
    if params.finite_cap:
        k1, k2 = lyapunov_constants(params, states[0])
    elif params.a == 0:
        k1 = k2 = 0.0
    else:
        k1 = k2 = math.nan
    rows = []
    for t, p in zip(times, states):
        r = rates(p, params)
        try:
            moment = exponential_moment(p, 2.0)
        except OverflowError:
            moment = math.inf
        rows.append({
            "time": float(t),
            "H": boltzmann_h(p),
            "H_ab": h_ab(p, params),
            "H_ab_tilde": h_ab_tilde(p, params, k1, k2) if math.isfinite(k2) else math.nan,
            "gini": gini(p),
            "lambda_r": r.lambda_r,
            "lambda_g": r.lambda_g,
            "exp_moment_2": moment,
            "l1_to_equilibrium": l1_distance(p, p_star),
        })
    return rows


def cmd_diagnose(cfg: RunConfig, ns: argparse.Namespace) -> None:
    params = cfg.params()
    times, states = read_states_csv(ns.input, params.n_max)
    rows = diagnose_states(times, states, params)
    if cfg.out:
        emit_csv(rows, cfg.out, METRIC_COLUMNS)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else _render(value)
    return value


def write_summary(path: Path, summary: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(study: str, cfg: RunConfig) -> dict[str, Any]:
    """Run one study, write ``<study>.csv`` and ``summary.json`` into ``cfg.out``."""
    out = cfg.out or Path(".")
    workers = cfg.get("workers")
    if study == "convergence":
        params = cfg.params()
        t_end = _float(cfg.get("t_end"), "t_end")
        res = experiments.run_convergence_study(
            params, _float(cfg.get("dt"), "dt"), t_end, _sample_times(cfg, t_end)
        )
        emit_csv(res.records, out / "convergence.csv",
                 ["time", "l1_to_equilibrium", "H", "H_ab", "H_ab_tilde", "gini"])
        summary = {"study": study, "rate": res.rate, "correlation": res.correlation,
                   "final_distance": res.final_distance,
                   "passed": res.final_distance < 1e-3 and res.correlation <= -0.999}
    elif study == "poc":
        params = cfg.params()
        res = experiments.run_poc_study(
            params,
            _int_list(cfg.get("n_list"), "n_list"),
            _float(cfg.get("t"), "t"),
            _int(cfg.get("replicas"), "replicas"),
            _int(cfg.get("seed", 0), "seed"),
            _float(cfg.get("dt"), "dt"),
            workers,
        )
        emit_csv(res.records(), out / "poc.csv", ["n_agents", "replicas", "mean_error", "std_error"])
        errs = [r.mean_error for r in res.rows]
        summary = {"study": study, "slope": res.slope, "slope_half_width": res.slope_half_width,
                   "passed": -0.65 <= res.slope <= -0.35 and all(x > y for x, y in zip(errs, errs[1:]))}
    elif study == "gini-sweep":
        mu = _int(cfg.get("mu"), "mu")
        t_end = _float(cfg.get("t_end"), "t_end")
        n_max = cfg.get("n_max")
        res = experiments.run_gini_sweep(
            mu,
            _int_list(cfg.get("a_list"), "a_list"),
            _cap_list(cfg.get("b_list")),
            _float(cfg.get("dt"), "dt"),
            t_end,
            n_max=None if n_max is None else _int(n_max, "n_max"),
            workers=workers,
        )
        emit_csv(res.records, out / "gini_sweep.csv", ["a", "b", "time", "gini"])
        summary = {"study": study, "mu": mu, "passed": res.passed,
                   "violations": res.violations, "final_violations": res.final_violations,
                   "proven_violations": res.proven_violations,
                   "equilibrium_gini": [{"a": a, "b": b, "gini": g} for (a, b), g in res.equilibrium_gini.items()]}
    elif study == "generator-oracle":
        res = experiments.run_generator_oracle(_int(cfg.get("max_total_wealth"), "max_total_wealth"))
        emit_csv(res.cases, out / "generator_oracle.csv",
                 ["n_agents", "a", "mu", "b", "states", "max_discrepancy"])
        summary = {"study": study, "max_discrepancy": res.max_discrepancy,
                   "tolerance": res.tolerance, "passed": res.passed}
    else:
        raise ValidationError(f"unknown study {study!r}", "study")
    write_summary(out / "summary.json", summary)
    return summary


def cmd_experiment(cfg: RunConfig, ns: argparse.Namespace) -> None:
    summary = run_experiment(ns.study, cfg)
    print(f"{ns.study}: {'pass' if summary['passed'] else 'FAIL'}")


# =============================================================================
# Argument parsing
# =============================================================================


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _model_flags(p: argparse.ArgumentParser, agents: bool = False) -> None:
    p.add_argument("--config", help="flat YAML file of parameters; flags override it")
    p.add_argument("--a", type=int, help="wealth floor")
    p.add_argument("--b", type=str, help="wealth cap (integer or 'inf')")
    p.add_argument("--mu", type=int, help="mean wealth per agent")
    p.add_argument("--n-max", dest="n_max", type=int, help="largest wealth level in mean-field vectors")
    if agents:
        p.add_argument("--n-agents", dest="n_agents", type=int, help="number of agents")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capfloor", description="Floor/cap BDY wealth-exchange toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="exact N-agent simulation")
    _model_flags(p, agents=True)
    p.add_argument("--t-end", dest="t_end", type=float, help="final simulated time")
    p.add_argument("--seed", type=int, help="64-bit seed")
    p.add_argument("--samples", type=int, help="number of evenly spaced snapshot times in [0, t_end]")
    p.add_argument("--out", help="trajectory CSV (time,n,count)")
    p.add_argument("--event-log", dest="event_log", help="optional CSV of exchanges (time,giver,receiver)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("meanfield", help="integrate the mean-field ODE with RK4")
    _model_flags(p)
    p.add_argument("--t-end", dest="t_end", type=float, help="final time")
    p.add_argument("--dt", type=float, help="RK4 step size")
    p.add_argument("--init", help="'delta' (point mass at mu) or 'csv:<path>'")
    p.add_argument("--samples", type=int, help="number of evenly spaced output times in [0, t_end]")
    p.add_argument("--out", help="states CSV (time,n,p_n)")
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("equilibrium", help="equilibrium distribution and summary")
    _model_flags(p)
    p.add_argument("--out", help="equilibrium CSV (n,p_n)")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("diagnose", help="entropy, Gini and rate metrics of stored states")
    _model_flags(p)
    p.add_argument("--in", dest="input", required=True, help="states CSV from meanfield or simulate")
    p.add_argument("--out", help="metrics CSV")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("experiment", help="run a numerical study")
    p.add_argument("study", choices=["convergence", "poc", "gini-sweep", "generator-oracle"])
    p.add_argument("--config", help="flat YAML file of study parameters")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: $BDY_THREADS or CPU count)")
    p.set_defaults(func=cmd_experiment)
    return parser


def parse_and_dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        key = ns.study if ns.command == "experiment" else None
        cfg = build_config(ns.command, ns, key)
        ns.func(cfg, ns)
    except ComputationError as exc:
        print(f"capfloor: runtime error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        where = getattr(exc, "key", None)
        prefix = f"{where}: " if where else ""
        print(f"capfloor: error: {prefix}{exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"capfloor: runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
