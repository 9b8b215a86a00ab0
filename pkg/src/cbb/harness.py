"""Multi-seed simulation runs, metric aggregation and CSV output.

Every seed gets its own :class:`~cbb.environment.Nature`, shared by all
policies in the run (common random numbers for contexts and rewards),
while each policy draws its own coins from a separate stream.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from cbb.baselines import UCBGreedy
from cbb.environment import BLOCK, EVENT_NAMES, LP_SKIP, PLAY, POLICY_STREAM, SKIP, BlockState, Nature, UniformStream
from cbb.errors import ConfigError
from cbb.fi_cbb import FICBB
from cbb.instance import Instance, named_instance, validate
from cbb.lp import solve_lp
from cbb.ucb_cbb import UCBCBB

POLICIES = {"fi_cbb": FICBB, "ucb_cbb": UCBCBB, "ucb_greedy": UCBGreedy}
POLICY_IDS = {"fi_cbb": 0, "ucb_cbb": 1, "ucb_greedy": 2}
ALPHA_MODES = ("d_max", "one")
CSV_COLUMNS = ["t", "regret_mean", "regret_q25", "regret_q75", "lp_skip_rate", "skip_rate", "block_rate"]
TRACE_COLUMNS = ["t", "M_t", "context", "sampled_arm", "event", "reward", "lp_value_used"]


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


@dataclass
class ExperimentConfig:
    instance: dict[str, Any]
    policies: list[str]
    horizon: int
    seeds: int
    base_seed: int = 0
    alpha_mode: str = "d_max"
    output_dir: str = "out"
    workers: int = 1
    trace: bool = False

    _KEYS = ("instance", "policies", "horizon", "seeds", "base_seed", "alpha_mode", "output_dir", "workers", "trace")

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon}")
        if int(self.seeds) != self.seeds or self.seeds < 1:
            raise ConfigError(f"seeds must be a positive integer, got {self.seeds}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; known: {sorted(POLICIES)}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("duplicate policy names")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not isinstance(self.instance, dict):
            raise ConfigError("instance must be an object")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ExperimentConfig:
        unknown = set(raw) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"instance", "policies", "horizon", "seeds"} - set(raw)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self._KEYS}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def build_instance(self) -> Instance:
        return instance_from_spec(self.instance)

    def label(self) -> str:
        spec = self.instance
        if "name" in spec:
            params = spec.get("params", {})
            tail = "_".join(f"{k}{params[k]}" for k in sorted(params))
            return spec["name"] + (f"_{tail}" if tail else "")
        return "custom_" + hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()[:8]


def instance_from_spec(spec: dict[str, Any]) -> Instance:
    """``{"name": ..., "params": {...}}`` for a named instance, else raw instance fields."""
    if "name" in spec:
        extra = set(spec) - {"name", "params"}
        if extra:
            raise ConfigError(f"unknown instance keys: {sorted(extra)}")
        return named_instance(spec["name"], **spec.get("params", {}))
    return validate(spec)


@dataclass
class Trajectory:
    """One policy on one seed: per-round events and rewards."""

    policy: str
    seed: int
    events: np.ndarray  # (T,) event codes
    rewards: np.ndarray  # (T,) realised reward (0 when nothing is played)
    trace: list[tuple] | None = None


def run_policy(inst: Instance, policy: str, T: int, seed: int, trace: bool = False, nature: Nature | None = None) -> Trajectory:
    """Simulate ``policy`` for T rounds on the sample path keyed by ``seed``."""
    nature = Nature(inst, seed) if nature is None else nature
    pol = POLICIES[policy](inst)
    coins = UniformStream(seed, POLICY_STREAM, POLICY_IDS[policy])
    blocks = BlockState.fresh(inst)
    delays = inst.delays
    events = np.zeros(T, dtype=np.int8)
    rewards = np.zeros(T)
    rows = [] if trace else None
    for t in range(1, T + 1):
        j = nature.context(t)
        sampled, action, event = pol.step(t, j, blocks, coins)
        x = 0.0
        if action >= 0:
            x = nature.reward(action, j, t)
            pol.observe(t, action, j, x)
        events[t - 1] = event
        rewards[t - 1] = x
        if rows is not None:
            rows.append((t, *_trace_extra(pol, t), j, sampled, EVENT_NAMES[event], x))
        blocks.advance(delays, action)
    if rows is not None:
        rows = [(r[0], r[1], r[3], r[4], r[5], r[6], r[2]) for r in rows]
    return Trajectory(policy=policy, seed=seed, events=events, rewards=rewards, trace=rows)


def _trace_extra(pol, t: int) -> tuple[int, float]:
    """(M_t, value of the LP vertex sampled from) for the trace dump."""
    if isinstance(pol, UCBCBB):
        M = pol.M_trace[-1]
        return M, pol.log.get(t - M).value
    if isinstance(pol, FICBB):
        return 0, pol.lp_value()
    return 0, float("nan")


def write_trace(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t, M, j, i, ev, x, v in traj.trace:
            w.writerow([t, M, j, i, ev, _fmt(x), _fmt(v)])


def quantile(a: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    """Nearest-rank quantile."""
    return np.quantile(a, q, axis=axis, method="inverted_cdf")


@dataclass
class MetricSeries:
    """Per-round metrics of one policy, per seed and aggregated over seeds."""

    policy: str
    regret: np.ndarray  # (seeds, T) cumulative alpha-regret
    rates: dict[str, np.ndarray] = field(default_factory=dict)  # name -> (seeds, T) running rate

    @property
    def horizon(self) -> int:
        return self.regret.shape[1]

    def regret_mean(self) -> np.ndarray:
        return self.regret.mean(axis=0)

    def regret_q25(self) -> np.ndarray:
        return quantile(self.regret, 0.25)

    def regret_q75(self) -> np.ndarray:
        return quantile(self.regret, 0.75)

    def rate_mean(self, name: str) -> np.ndarray:
        return self.rates[name].mean(axis=0)

    def to_csv(self, path) -> None:
        cols = [
            np.arange(1, self.horizon + 1),
            self.regret_mean(),
            self.regret_q25(),
            self.regret_q75(),
            self.rate_mean("lp_skip"),
            self.rate_mean("skip"),
            self.rate_mean("block"),
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in zip(*cols):
                w.writerow([int(row[0])] + [_fmt(x) for x in row[1:]])


def metrics_from(trajs: list[Trajectory], lp_value: float, alpha: float) -> MetricSeries:
    T = trajs[0].events.shape[0]
    t = np.arange(1, T + 1)
    regret = np.array([alpha * lp_value * t - np.cumsum(tr.rewards) for tr in trajs])
    rates = {}
    for code, name in ((LP_SKIP, "lp_skip"), (SKIP, "skip"), (BLOCK, "block"), (PLAY, "play")):
        rates[name] = np.array([np.cumsum(tr.events == code) / t for tr in trajs])
    return MetricSeries(policy=trajs[0].policy, regret=regret, rates=rates)


def _run_seed(args) -> list[Trajectory]:
    inst, policies, T, seed, trace = args
    nature = Nature(inst, seed)
    return [run_policy(inst, p, T, seed, trace=trace, nature=nature) for p in policies]


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
            cwd=Path(__file__).resolve().parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> dict[str, MetricSeries]:
    """Run every policy on ``cfg.seeds`` sample paths and aggregate.

    Seeds are ``base_seed, base_seed + 1, ...``. Results are reduced in
    seed order, so worker count does not change the output.
    """
    start = time.time()
    inst = cfg.build_instance()
    lp_value = solve_lp(inst).value
    alpha = inst.alpha if cfg.alpha_mode == "d_max" else 1.0
    jobs = [(inst, cfg.policies, cfg.horizon, cfg.base_seed + s, cfg.trace) for s in range(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(_run_seed, jobs))
    else:
        per_seed = [_run_seed(job) for job in jobs]
    out = {}
    for k, p in enumerate(cfg.policies):
        out[p] = metrics_from([runs[k] for runs in per_seed], lp_value, alpha)
    if write:
        _write_outputs(cfg, inst, out, per_seed, lp_value, alpha, time.time() - start)
    return out


def _write_outputs(cfg, inst, series, per_seed, lp_value, alpha, wall) -> None:
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from None
    label = cfg.label()
    for p, ms in series.items():
        ms.to_csv(out_dir / f"{label}__{p}.csv")
    if cfg.trace:
        for runs in per_seed:
            for traj in runs:
                write_trace(out_dir / f"{label}__{traj.policy}__seed{traj.seed}_trace.csv", traj)
    meta = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "instance": inst.to_dict(),
        "lp_value": lp_value,
        "alpha": alpha,
        "git_describe": git_describe(),
        "wall_time_s": round(wall, 3),
    }
    with open(out_dir / f"{label}__metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def sweep(cfg: ExperimentConfig, param: str, values: list) -> dict[Any, dict[str, MetricSeries]]:
    """Re-run ``cfg`` with instance parameter ``param`` set to each value."""
    if "name" not in cfg.instance:
        raise ConfigError("sweeps need a named instance")
    results = {}
    for v in values:
        spec = {"name": cfg.instance["name"], "params": {**cfg.instance.get("params", {}), param: v}}
        sub = ExperimentConfig.from_dict({**cfg.to_dict(), "instance": spec})
        results[v] = run_experiment(sub)
    return results


def parse_param(text: str) -> tuple[str, list]:
    """``gap=0.4,0.6,0.8`` -> ("gap", [0.4, 0.6, 0.8]); integers stay integers."""
    name, sep, rest = text.partition("=")
    if not sep or not name or not rest:
        raise ConfigError(f"expected NAME=V1,V2,..., got {text!r}")
    vals = []
    for tok in rest.split(","):
        try:
            vals.append(int(tok))
        except ValueError:
            try:
                vals.append(float(tok))
            except ValueError:
                raise ConfigError(f"not a number: {tok!r}") from None
    return name.strip(), vals


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
