"""Property checks with measured values, shared by ``verify`` and the test-suite.

Each check returns a :class:`CheckResult`; failures are data, not
exceptions, so a report can list every outcome.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from cbb.baselines import clairvoyant_path_reward, clairvoyant_reward, hardness_analysis
from cbb.fi_cbb import build_schedule, simulate_batch
from cbb.harness import ExperimentConfig, run_experiment
from cbb.instance import Instance, gap_instance, integral, validate
from cbb.lp import compute_gaps, enumerate_extreme_points, solve_lp
from cbb.ucb_cbb import UCBCBB, critical_time, delay_M


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict[str, Any] = field(default_factory=dict)
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.name}: {shown}" + (f" ({self.detail})" if self.detail else "")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": {k: _plain(v) for k, v in self.measured.items()},
            "detail": self.detail,
            "seconds": round(self.seconds, 3),
        }


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.time()
        res = fn(*args, **kwargs)
        res.seconds = time.time() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _z_scores(counts: np.ndarray, n: int, p: np.ndarray) -> np.ndarray:
    """|count/n - p| in binomial standard deviations; inf on any mismatch at p in {0, 1}."""
    freq = counts / n
    sd = np.sqrt(p * (1 - p) / n)
    diff = np.abs(freq - p)
    out = np.zeros_like(diff)
    pos = sd > 0
    out[pos] = diff[pos] / sd[pos]
    out[~pos & (diff > 0)] = np.inf
    return out


def two_arm_instance() -> Instance:
    return validate({"delays": [2, 3], "context_probs": [0.4, 0.6], "means": [[0.9, 0.2], [0.3, 0.8]]})


def random_small_instances(n: int, seed: int = 0, max_k: int = 2, max_m: int = 2, max_d: int = 3) -> list[Instance]:
    """Instances small enough for the brute-force oracle; at least one delay > 1 each."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        k = int(rng.integers(1, max_k + 1))
        m = int(rng.integers(1, max_m + 1))
        d = rng.integers(1, max_d + 1, size=k)
        if d.max() < 2:
            continue
        f = rng.dirichlet(np.ones(m))
        f[-1] = 1.0 - f[:-1].sum()
        mu = rng.uniform(0, 1, size=(k, m))
        out.append(validate({"delays": d, "context_probs": f, "means": mu}))
    return out


def random_instance(rng: np.random.Generator, k: int, m: int, max_d: int = 5) -> Instance:
    f = rng.dirichlet(np.ones(m))
    f[-1] = 1.0 - f[:-1].sum()
    return validate(
        {"delays": rng.integers(1, max_d + 1, size=k), "context_probs": f, "means": rng.uniform(0, 1, size=(k, m))}
    )


# --- checks ----------------------------------------------------------------


@_timed
def fi_exactness(runs: int = 200_000, T: int = 50, seed: int = 1, inst: Instance | None = None) -> CheckResult:
    """Play frequency of every (i, j, t) equals d_i/(2d_i-1) z*_ij."""
    inst = integral(0.4) if inst is None else inst
    z = solve_lp(inst)
    res = simulate_batch(inst, z, T, runs, seed)
    cap = inst.delays / (2 * inst.delays - 1)
    target = np.repeat((cap[:, None] * z.z)[:, :, None], T, axis=2)
    zs = _z_scores(res.plays, runs, target)
    worst = float(zs.max())
    return CheckResult(
        "fi_cbb play frequency = d/(2d-1) z*",
        passed=worst <= 5.0,
        measured={"max_sigma": worst, "cells": int(target.size), "runs": runs},
    )


@_timed
def availability_recursion(runs: int = 100_000, T: int = 30, seed: int = 2) -> CheckResult:
    """Empirical availability matches the a-priori recursion for t <= T."""
    inst = two_arm_instance()
    z = solve_lp(inst)
    res = simulate_batch(inst, z, T, runs, seed)
    q = build_schedule(inst, z, T).q
    zs = _z_scores(res.available, runs, q)
    worst = float(zs.max())
    return CheckResult(
        "availability frequency = q_{i,t}",
        passed=worst <= 5.0,
        measured={"max_sigma": worst, "runs": runs, "T": T},
    )


@_timed
def lp_upper_bound(n: int = 20, seed: int = 3, max_T: int = 8, slack: float = 1e-9) -> CheckResult:
    """T * LP >= (1 - (d-1)/(d-1+T)) * Rew*(T) on random tiny instances."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    for inst in random_small_instances(n, seed):
        T = int(rng.integers(1, max_T + 1))
        rew = clairvoyant_reward(inst, T).expected_reward
        d = inst.d_max
        margin = T * solve_lp(inst).value - (1 - (d - 1) / (d - 1 + T)) * rew
        worst = min(worst, margin)
    return CheckResult(
        "T*LP >= (1-(d-1)/(d-1+T)) Rew*",
        passed=worst >= -slack,
        measured={"instances": n, "min_margin": worst},
    )


@_timed
def competitive_ratio(n: int = 20, T: int = 2000, seeds: int = 60, seed: int = 4) -> CheckResult:
    """FI-CBB total reward against alpha (1 - (d-1)/(d-1+T)) Rew*(T), paired on context paths.

    Rew*(T) is estimated by the clairvoyant dynamic program on the same
    context sequences FI-CBB sees, so the comparison is a paired one.
    """
    rng = np.random.default_rng(seed)
    worst = math.inf
    for idx, inst in enumerate(random_small_instances(n, seed)):
        cdf = np.cumsum(inst.context_probs)
        cdf[-1] = 1.0
        ctx = np.searchsorted(cdf, rng.random((seeds, T)), side="right")
        z = solve_lp(inst)
        fi = simulate_batch(inst, z, T, seeds, seed + 1000 + idx, contexts=ctx).reward
        opt = clairvoyant_path_reward(inst, ctx)
        d = inst.d_max
        alpha = d / (2 * d - 1)
        diff = fi - alpha * (1 - (d - 1) / (d - 1 + T)) * opt
        se = diff.std(ddof=1) / math.sqrt(seeds)
        worst = min(worst, (diff.mean() + 3 * se) / T)
    return CheckResult(
        "FI-CBB reward >= alpha-fraction of clairvoyant (3 sigma)",
        passed=worst >= 0,
        measured={"instances": n, "T": T, "seeds": seeds, "min_margin_per_round": worst},
    )


@_timed
def sparsity(instances: int = 10, objectives: int = 1000, seed: int = 5, enum_instances: int = 10) -> CheckResult:
    """|supp(Z)| <= k + m for solver output and for every enumerated vertex."""
    rng = np.random.default_rng(seed)
    worst_solve = -math.inf
    for _ in range(instances):
        k, m = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        inst = random_instance(rng, k, m)
        for _ in range(objectives):
            z = solve_lp(inst, rng.uniform(0, 1, size=(k, m)))
            worst_solve = max(worst_solve, len(z.support) - (k + m))
    worst_enum = -math.inf
    vertices = 0
    shapes = [(k, m) for k in range(1, 10) for m in range(1, 10) if k * m <= 9]
    for n in range(enum_instances):
        k, m = shapes[n % len(shapes)] if n < len(shapes) else shapes[int(rng.integers(len(shapes)))]
        inst = random_instance(rng, k, m)
        for v in enumerate_extreme_points(inst):
            vertices += 1
            worst_enum = max(worst_enum, len(v.support) - (k + m))
    return CheckResult(
        "extreme-point support <= k + m",
        passed=worst_solve <= 0 and worst_enum <= 0,
        measured={
            "solves": instances * objectives,
            "max_excess_solve": int(worst_solve),
            "enumerated": vertices,
            "max_excess_enum": int(worst_enum),
        },
    )


@_timed
def gap_values(tol: float = 1e-9) -> CheckResult:
    """Pairwise gaps on the 3-arm worked example: 0.3 on the diagonal, 0.6 off it."""
    g = compute_gaps(gap_instance(3, 0.9))
    target = np.full((3, 3), 0.6)
    np.fill_diagonal(target, 0.3)
    err = float(np.max(np.abs(g.delta_min - target)))
    return CheckResult("gap_instance(3, 0.9) delta_min", passed=err <= tol, measured={"max_error": err})


@_timed
def hardness_closed_form(n: int = 100, seed: int = 6, tol: float = 1e-6) -> CheckResult:
    """Grid optimum equals R/(1+(d-1)eps) at (1, 0) when R > eps + 1/(d-1)."""
    rng = np.random.default_rng(seed)
    worst_val, bad_arg = 0.0, 0
    for _ in range(n):
        d = int(rng.integers(2, 11))
        eps = float(10 ** rng.uniform(-4, -0.5))
        lo = eps + 1 / (d - 1)
        R = float(lo + rng.uniform(0.01, 2.0))
        rec = hardness_analysis(d, eps, R)
        worst_val = max(worst_val, abs(rec.f_opt - R / (1 + (d - 1) * eps)))
        bad_arg += rec.q_opt != (1.0, 0.0)
    return CheckResult(
        "hardness grid optimum matches closed form",
        passed=worst_val <= tol and bad_arg == 0,
        measured={"triples": n, "max_value_error": worst_val, "argmax_mismatches": bad_arg},
    )


@_timed
def hardness_ratio(d: int = 3, eps: float = 1e-4, band: float = 0.02) -> CheckResult:
    """Ratio series at R = 2 eps + 1/(d-1) is within ``band`` of d/(2d-1)."""
    R = 2 * eps + 1 / (d - 1)
    rec = hardness_analysis(d, eps, R)
    target = d / (2 * d - 1)
    return CheckResult(
        "hardness ratio near d/(2d-1)",
        passed=abs(rec.ratio_ub - target) <= band,
        measured={"ratio": rec.ratio_ub, "target": target, "distance": abs(rec.ratio_ub - target)},
    )


def simulation_bands(T: int = 10_000, seeds: int = 60, workers: int = 1) -> list[CheckResult]:
    """Regret shape and event-rate bands for UCB-CBB against UCB-Greedy."""
    out = []
    h = T // 2
    for gap in (0.8, 0.6):
        t0 = time.time()
        cfg = ExperimentConfig(
            instance={"name": "integral", "params": {"gap": gap}},
            policies=["ucb_cbb", "ucb_greedy"],
            horizon=T,
            seeds=seeds,
            workers=workers,
        )
        res = run_experiment(cfg, write=False)
        cb, gr = res["ucb_cbb"], res["ucb_greedy"]
        rc, rg = cb.regret_mean(), gr.regret_mean()
        c_first, c_second = rc[h - 1], rc[-1] - rc[h - 1]
        g_first, g_second = rg[h - 1], rg[-1] - rg[h - 1]
        ratio = rc[-1] / rg[-1]
        el = time.time() - t0
        out.append(CheckResult(f"integral({gap}) ucb_cbb regret < 25% of greedy", ratio < 0.25, {"ratio": ratio, "ucb_cbb": rc[-1], "greedy": rg[-1]}, seconds=el))
        out.append(CheckResult(f"integral({gap}) ucb_cbb second-half increment < 50% of first", c_second < 0.5 * c_first, {"first": c_first, "second": c_second}))
        out.append(CheckResult(f"integral({gap}) greedy halves within 20%", abs(g_second - g_first) <= 0.2 * abs(g_first), {"first": g_first, "second": g_second}))
        bc, bg = cb.rate_mean("block")[-1], gr.rate_mean("block")[-1]
        out.append(CheckResult(f"integral({gap}) ucb_cbb block rate in [0.35, 0.45]", 0.35 <= bc <= 0.45, {"block": bc}))
        out.append(CheckResult(f"integral({gap}) greedy block rate < 0.01", bg < 0.01, {"block": bg}))
    t0 = time.time()
    cfg = ExperimentConfig(
        instance={"name": "noninteg_3x3_d6", "params": {}},
        policies=["ucb_cbb", "ucb_greedy"],
        horizon=T,
        seeds=seeds,
        workers=workers,
    )
    res = run_experiment(cfg, write=False)
    bc, bg = res["ucb_cbb"].rate_mean("block")[-1], res["ucb_greedy"].rate_mean("block")[-1]
    out.append(CheckResult("noninteg_3x3_d6 greedy block rate in [0.45, 0.55]", 0.45 <= bg <= 0.55, {"block": bg}, seconds=time.time() - t0))
    out.append(CheckResult("noninteg_3x3_d6 ucb_cbb block rate in [0.17, 0.27]", 0.17 <= bc <= 0.27, {"block": bc}))
    return out


@_timed
def lag_facts(d_values=range(1, 101), t_max: int = 200_000) -> CheckResult:
    """T_c bounds, and beyond T_c the lag grows by at most 1 while t - M_t never decreases."""
    bad_tc, bad_step = [], []
    for d in d_values:
        tc = critical_time(d)
        if not 2 * d + 67 <= tc <= 3 * d + 71:
            bad_tc.append((d, tc))
        t = np.arange(tc, t_max + 1)
        M = _M_vec(t, d)
        if d <= 3:
            assert all(delay_M(int(x), d) == M[n] for n, x in enumerate(t[:5000]))
        dM = np.diff(M)
        s = t - M
        if np.any(dM > 1) or np.any(np.diff(s) < 0) or s[0] != 1:
            bad_step.append(d)
    return CheckResult(
        "lag schedule facts",
        passed=not bad_tc and not bad_step,
        measured={"d_max_scanned": len(list(d_values)), "T_c_out_of_range": len(bad_tc), "step_violations": len(bad_step)},
        detail=f"T_c(3)={critical_time(3)}",
    )


def _M_vec(t: np.ndarray, d: int) -> np.ndarray:
    from cbb.ucb_cbb import LN_C1

    raw = np.floor(2.0 * np.log(t) / LN_C1).astype(np.int64) + 2 * d + 8
    return np.where(t <= raw, t, raw)


@_timed
def runtime_lag_checks(T: int = 2000, seeds: int = 3) -> CheckResult:
    """No lag-monotonicity violations are recorded during full policy runs."""
    from cbb.environment import POLICY_STREAM, BlockState, Nature, UniformStream

    violations = rounds = 0
    for inst in (integral(0.8), validate({"delays": [2, 5], "context_probs": [0.5, 0.5], "means": [[0.7, 0.2], [0.1, 0.6]]})):
        for seed in range(seeds):
            nat = Nature(inst, seed)
            pol = UCBCBB(inst)
            coins = UniformStream(seed, POLICY_STREAM, 1)
            blocks = BlockState.fresh(inst)
            for t in range(1, T + 1):
                j = nat.context(t)
                _, a, _ = pol.step(t, j, blocks, coins)
                if a >= 0:
                    pol.observe(t, a, j, nat.reward(a, j, t))
                blocks.advance(inst.delays, a)
            violations += pol.diag.lag_violations
            rounds += T
    return CheckResult("runtime lag monotonicity", passed=violations == 0, measured={"rounds": rounds, "violations": violations})


@_timed
def determinism(T: int = 300, seeds: int = 2) -> CheckResult:
    """Two runs of the same configuration write byte-identical CSVs."""
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        for out in dirs:
            cfg = ExperimentConfig(
                instance={"name": "noninteg_3x3", "params": {}},
                policies=["fi_cbb", "ucb_cbb", "ucb_greedy"],
                horizon=T,
                seeds=seeds,
                base_seed=7,
                output_dir=str(out),
                trace=True,
            )
            run_experiment(cfg)
        names = sorted(p.name for p in dirs[0].glob("*.csv"))
        same = [filecmp.cmp(dirs[0] / n, dirs[1] / n, shallow=False) for n in names]
    return CheckResult("byte-identical CSV output", passed=bool(names) and all(same), measured={"files": len(names), "identical": sum(same)})


def verify_suite(level: str = "fast") -> list[CheckResult]:
    """Run the declared property checks; ``fast`` uses reduced sample sizes."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    fast = level == "fast"
    results = [
        fi_exactness(runs=20_000, T=20, inst=two_arm_instance()) if fast else fi_exactness(),
        availability_recursion(runs=20_000) if fast else availability_recursion(),
        lp_upper_bound(n=5, max_T=6) if fast else lp_upper_bound(),
        competitive_ratio(n=3, T=500, seeds=20) if fast else competitive_ratio(),
        sparsity(instances=2, objectives=100, enum_instances=3) if fast else sparsity(),
        gap_values(),
        hardness_closed_form(n=10 if fast else 100),
        hardness_ratio(),
        lag_facts(t_max=20_000 if fast else 200_000),
        runtime_lag_checks(T=500 if fast else 2000, seeds=1 if fast else 3),
        determinism(T=100 if fast else 300),
    ]
    if not fast:
        results.extend(simulation_bands())
    return results
