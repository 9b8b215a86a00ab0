"""Full-information policy: online randomized rounding of the LP optimum.

Each round the policy samples an arm from the LP marginals of the
observed context and, if the arm is free, plays it with a precomputed
non-skipping probability beta[i, t] that keeps arm i free with a-priori
probability at least d_i / (2 d_i - 1).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from cbb.environment import BLOCK, LP_SKIP, PLAY, SKIP, BlockState
from cbb.instance import Instance, RewardKind
from cbb.lp import ExtremePoint, solve_lp

Q_FLOOR = 1e-15
CHUNK = 1024


def play_cap(delays) -> np.ndarray:
    """d / (2d - 1) per arm."""
    d = np.asarray(delays, dtype=float)
    return d / (2 * d - 1)


@dataclass
class AvailabilitySchedule:
    q: np.ndarray  # (k, T); column t-1 is round t
    beta: np.ndarray  # (k, T)

    @property
    def horizon(self) -> int:
        return self.q.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "arm", "q", "beta"])
            for t in range(self.horizon):
                for i in range(self.q.shape[0]):
                    w.writerow([t + 1, i, repr(float(self.q[i, t])), repr(float(self.beta[i, t]))])


def _extend(q: np.ndarray, beta: np.ndarray, delays, rates, cap, start: int) -> None:
    """Fill columns start.. of q/beta in place; columns < start (and column 0) are set."""
    k, T = q.shape
    for i in range(k):
        d = int(delays[i])
        r = float(rates[i])
        a = float(cap[i])
        qi, bi = q[i], beta[i]
        for t in range(start, T):
            # column t is round t+1; recursion uses rounds t and t-d+1
            nxt = qi[t - 1] * (1.0 - bi[t - 1] * r)
            if t >= d:
                nxt += qi[t - d] * bi[t - d] * r
            nxt = min(max(nxt, Q_FLOOR), 1.0)
            qi[t] = nxt
            bi[t] = min(1.0, a / nxt)


def build_schedule(inst: Instance, zstar: ExtremePoint, horizon: int) -> AvailabilitySchedule:
    """A-priori availability q[i, t] and non-skipping probability beta[i, t] for t = 1..horizon."""
    k = inst.k
    q = np.zeros((k, horizon))
    beta = np.zeros((k, horizon))
    cap = play_cap(inst.delays)
    q[:, 0] = 1.0
    beta[:, 0] = cap
    _extend(q, beta, inst.delays, zstar.arm_rates(), cap, 1)
    return AvailabilitySchedule(q=q, beta=beta)


class LazySchedule:
    """Schedule grown forward in chunks when the horizon is not known."""

    def __init__(self, inst: Instance, zstar: ExtremePoint, chunk: int = CHUNK):
        self.inst = inst
        self.rates = zstar.arm_rates()
        self.cap = play_cap(inst.delays)
        self.chunk = chunk
        sched = build_schedule(inst, zstar, chunk)
        self.q, self.beta = sched.q, sched.beta
        self._beta_rows = [row.tolist() for row in self.beta]

    def _grow(self, need: int) -> None:
        old = self.q.shape[1]
        new = old
        while new < need:
            new += self.chunk
        q = np.zeros((self.q.shape[0], new))
        beta = np.zeros_like(q)
        q[:, :old] = self.q
        beta[:, :old] = self.beta
        _extend(q, beta, self.inst.delays, self.rates, self.cap, old)
        self.q, self.beta = q, beta
        self._beta_rows = [row.tolist() for row in beta]

    def beta_at(self, i: int, t: int) -> float:
        if t > self.q.shape[1]:
            self._grow(t)
        return self._beta_rows[i][t - 1]

    def schedule(self) -> AvailabilitySchedule:
        return AvailabilitySchedule(q=self.q.copy(), beta=self.beta.copy())


def sample_arm(column, f_j: float, u: float) -> int:
    """Arm whose interval [sum_{i'<i} z/f, sum_{i'<=i} z/f) contains u, or -1."""
    acc = 0.0
    for i, z in enumerate(column):
        if z > 0.0:
            acc += z / f_j
            if u < acc:
                return i
    return -1


def step_fi(inst, zstar, schedule, t, j, block_state: BlockState, rng) -> tuple[int, int, int]:
    """One FI-CBB round. Returns (sampled arm or -1, played arm or -1, event code).

    ``schedule`` is an :class:`AvailabilitySchedule` or :class:`LazySchedule`;
    ``rng`` is anything with ``random()`` (one draw for the arm, a second
    one only if the arm is free).
    """
    i = sample_arm(zstar.z[:, j], inst.context_probs[j], rng.random())
    if i < 0:
        return -1, -1, LP_SKIP
    if block_state.remaining[i]:
        return i, -1, BLOCK
    if isinstance(schedule, LazySchedule):
        b = schedule.beta_at(i, t)
    else:
        b = schedule.beta[i, t - 1]
    if rng.random() <= b:
        return i, i, PLAY
    return i, -1, SKIP


class FICBB:
    """Full-information policy object for the simulation runner."""

    name = "fi_cbb"

    def __init__(self, inst: Instance, zstar: ExtremePoint | None = None):
        self.inst = inst
        self.zstar = solve_lp(inst) if zstar is None else zstar
        self.schedule = LazySchedule(inst, self.zstar)
        self._cols = [self.zstar.z[:, j].tolist() for j in range(inst.m)]
        self._f = inst.context_probs.tolist()

    def lp_value(self) -> float:
        return self.zstar.value

    def step(self, t: int, j: int, blocks: BlockState, coins) -> tuple[int, int, int]:
        i = sample_arm(self._cols[j], self._f[j], coins.next())
        if i < 0:
            return -1, -1, LP_SKIP
        if blocks.remaining[i]:
            return i, -1, BLOCK
        if coins.next() <= self.schedule.beta_at(i, t):
            return i, i, PLAY
        return i, -1, SKIP

    def observe(self, t: int, i: int, j: int, x: float) -> None:
        pass


@dataclass
class BatchResult:
    """Counts from many independent FI-CBB runs of length T."""

    runs: int
    plays: np.ndarray  # (k, m, T) number of runs playing arm i under context j at round t
    available: np.ndarray  # (k, T) number of runs with arm i free at round t
    reward: np.ndarray  # (runs,) total realised reward per run


def simulate_batch(
    inst: Instance,
    zstar: ExtremePoint,
    T: int,
    runs: int,
    seed: int,
    contexts: np.ndarray | None = None,
    chunk: int = 50_000,
) -> BatchResult:
    """Vectorised FI-CBB over ``runs`` independent sample paths.

    Uses the same sampling rule as :class:`FICBB` (one uniform for the arm
    interval, one for the beta coin) but draws from numpy in bulk, so it is
    meant for Monte-Carlo checks rather than trace-level reproducibility.
    ``contexts`` optionally fixes the (runs, T) context sequence.
    """
    rng = np.random.default_rng(seed)
    k, m = inst.k, inst.m
    sched = build_schedule(inst, zstar, T)
    # cumulative marginals per context, shape (m, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        marg = np.where(inst.context_probs[None, :] > 0, zstar.z / inst.context_probs[None, :], 0.0)
    cum = np.cumsum(marg.T, axis=1)
    cdf = np.cumsum(inst.context_probs)
    cdf[-1] = 1.0
    delays = inst.delays
    plays = np.zeros((k, m, T), dtype=np.int64)
    avail = np.zeros((k, T), dtype=np.int64)
    reward = np.zeros(runs)
    for lo in range(0, runs, chunk):
        n = min(chunk, runs - lo)
        rem = np.zeros((n, k), dtype=np.int64)
        rows = np.arange(n)
        for t in range(T):
            if contexts is None:
                ctx = np.searchsorted(cdf, rng.random(n), side="right")
            else:
                ctx = contexts[lo : lo + n, t]
            u = rng.random(n)
            v = rng.random(n)
            free = rem == 0
            avail[:, t] += free.sum(axis=0)
            arm = (u[:, None] >= cum[ctx]).sum(axis=1)  # k means none
            has = arm < k
            arm_c = np.minimum(arm, k - 1)
            ok = has & free[rows, arm_c] & (v <= sched.beta[arm_c, t])
            np.subtract(rem, 1, out=rem, where=rem > 0)
            pi, pc = arm_c[ok], ctx[ok]
            rem[rows[ok], pi] = delays[pi] - 1
            np.add.at(plays[:, :, t], (pi, pc), 1)
            mu = inst.means[pi, pc]
            if inst.reward_kind is RewardKind.BERNOULLI:
                x = (rng.random(pi.shape[0]) < mu).astype(float)
            else:
                x = mu
            np.add.at(reward, lo + rows[ok], x)
    return BatchResult(runs=runs, plays=plays, available=avail, reward=reward)
