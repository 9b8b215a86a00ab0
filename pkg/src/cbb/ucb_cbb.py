"""Bandit policy: UCB indices, delayed exploitation and conditional skipping.

At round t the policy samples from the LP vertex computed with the UCB
indices of round t - M_t (M_t grows like log t), and plays a free sampled
arm with probability min{1, (d/(2d-1)) / q}, where q is the probability
that the arm is free at t given the history up to round t - M_t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from cbb.environment import BLOCK, LP_SKIP, PLAY, SKIP, BlockState
from cbb.errors import HistoryGapError
from cbb.fi_cbb import play_cap, sample_arm
from cbb.instance import Instance
from cbb.lp import ENUM_LIMIT, ExtremePoint, enumerate_extreme_points, solve_lp, tp_group_index

TIE_EPS = 1e-8
C1 = math.e**2 / (math.e**2 - 1)
LN_C1 = math.log(C1)


def ucb_index(emp_mean: float, pulls: int, t: int) -> float:
    if pulls == 0:
        return 1.0
    return min(1.0, emp_mean + math.sqrt(3.0 * math.log(t) / (2.0 * pulls)))


def delay_M_raw(t: int, d_max: int) -> int:
    """floor(2 log_{c1} t) + 2 d_max + 8, before the t <= M clamp."""
    return int(math.floor(2.0 * math.log(t) / LN_C1)) + 2 * d_max + 8


def delay_M(t: int, d_max: int) -> int:
    M = delay_M_raw(t, d_max)
    return t if t <= M else M


def critical_time(d_max: int) -> int:
    """Smallest t with t - M_t >= 1."""
    t = 1
    while t - delay_M_raw(t, d_max) < 1:
        t += 1
    return t


def lag_origin(t: int, d_max: int) -> int:
    """[t - M_t]^+ : the round whose indices drive round t."""
    return max(t - delay_M(t, d_max), 0)


class UcbState:
    """Pull counts, reward sums and UCB indices for every arm-context pair."""

    def __init__(self, k: int, m: int):
        self.pulls = np.zeros((k, m), dtype=np.int64)
        self.sums = np.zeros((k, m))
        self.counters: dict[tuple[int, int, int], int] = {}

    @property
    def emp_mean(self) -> np.ndarray:
        out = np.zeros_like(self.sums)
        np.divide(self.sums, self.pulls, out=out, where=self.pulls > 0)
        return out

    def indices(self, t: int) -> np.ndarray:
        pulls = self.pulls
        out = np.ones_like(self.sums)
        seen = pulls > 0
        if seen.any():
            bonus = np.sqrt(3.0 * math.log(t) / (2.0 * pulls[seen]))
            out[seen] = np.minimum(1.0, self.sums[seen] / pulls[seen] + bonus)
        return out

    def update(self, i: int, j: int, x: float) -> None:
        self.pulls[i, j] += 1
        self.sums[i, j] += x


class ExtremePointLog:
    """Append-once record Z(0), Z(1), ... of the vertices actually computed."""

    def __init__(self):
        self._by_round: dict[int, ExtremePoint] = {}

    def put(self, tau: int, vertex: ExtremePoint) -> None:
        if tau in self._by_round:
            raise ValueError(f"Z({tau}) already recorded")
        self._by_round[tau] = vertex

    def get(self, tau: int) -> ExtremePoint:
        try:
            return self._by_round[tau]
        except KeyError:
            raise HistoryGapError(f"Z({tau}) has not been computed") from None

    def __contains__(self, tau: int) -> bool:
        return tau in self._by_round

    def __len__(self) -> int:
        return len(self._by_round)


class CompQCache:
    """Memo of q_{i,t}(H_{t-M_t}) keyed by (arm, round), with lag-based eviction.

    Values live in a (k, capacity) array indexed by round. Eviction raises
    ``floor``; rounds below it read as absent, and their slots are never
    consulted again.
    """

    def __init__(self, k: int, capacity: int = 1024):
        self.q = np.zeros((k, capacity + 1))
        self.frontier = np.zeros(k, dtype=np.int64)  # last round filled per arm
        self.floor = 0
        self.hits = 0

    def get(self, i: int, t: int) -> float | None:
        if t < self.floor or t < 1 or t > self.frontier[i]:
            return None
        return float(self.q[i, t])

    def reserve(self, t: int) -> None:
        if t >= self.q.shape[1]:
            grown = np.zeros((self.q.shape[0], max(2 * self.q.shape[1], t + 1)))
            grown[:, : self.q.shape[1]] = self.q
            self.q = grown

    def evict_before(self, threshold: int) -> None:
        if threshold > self.floor:
            self.floor = threshold

    def __len__(self) -> int:
        lo = max(self.floor, 1)
        return int(np.maximum(self.frontier - lo + 1, 0).sum())


class History:
    """What COMPQ needs from the run so far.

    Row s of ``remaining`` is the blocking vector at the start of round s
    and row tau of ``rates`` the per-arm row sums of the vertex used at
    round tau (row 0 unused). ``last_round`` counts recorded rounds.
    """

    def __init__(self, k: int, d_max: int, capacity: int = 1024):
        self.d_max = d_max
        self.remaining = np.zeros((capacity + 1, k), dtype=np.int64)
        self.rates = np.zeros((capacity + 1, k))
        self.last_round = 0

    def record(self, remaining, rates) -> None:
        t = self.last_round + 1
        if t >= self.rates.shape[0]:
            n = 2 * self.rates.shape[0]
            for name in ("remaining", "rates"):
                old = getattr(self, name)
                new = np.zeros((n, old.shape[1]), dtype=old.dtype)
                new[: old.shape[0]] = old
                setattr(self, name, new)
        self.remaining[t] = remaining
        self.rates[t] = rates
        self.last_round = t


@njit(cache=True)
def _fill(q, rem, rates, i, start, stop, delay, cap, d_max, ln_c1):
    """q[i, tau] for tau = start..stop by the conditional availability recursion.

    For each tau the recursion restarts at t0 = s + remaining[s][i] with
    s = tau - M_tau (t0 = 1 before any lag), where arm i is known to be
    free, and runs forward with the non-skipping probabilities
    min(1, cap / q[i, t']) that were actually in force at rounds t' < tau.
    """
    n_max = stop + 1
    qs = np.empty(n_max)
    bs = np.empty(n_max)
    for tau in range(start, stop + 1):
        M = int(math.floor(2.0 * math.log(tau) / ln_c1)) + 2 * d_max + 8
        if tau <= M:
            s = 0
        else:
            s = tau - M
        t0 = 1 if s <= 0 else s + rem[s, i]
        if delay == 1 or t0 >= tau:
            q[i, tau] = 1.0
            continue
        n = tau - t0
        qs[0] = 1.0
        for off in range(n):
            tp = t0 + off
            b = cap / q[i, tp]
            if b > 1.0:
                b = 1.0
            bs[off] = b
            r = rates[tp, i]
            nxt = qs[off] * (1.0 - b * r)
            pp = off - delay + 1
            if pp >= 0:
                nxt += qs[pp] * bs[pp] * rates[t0 + pp, i]
            qs[off + 1] = nxt
        v = qs[n]
        if v < 1e-15:
            v = 1e-15
        elif v > 1.0:
            v = 1.0
        q[i, tau] = v


def compq(i: int, t: int, inst: Instance, hist: History, cache: CompQCache) -> float:
    """P[arm i free at round t | history up to round t - M_t].

    Missing earlier values for arm i are filled in ascending round order,
    so a cold cache costs one pass rather than deep recursion. Entries older
    than t - M_t are evicted afterwards. Filling fails with
    :class:`HistoryGapError` if a needed value was already evicted or the
    history does not reach round t - 1; the policy avoids the former by
    evaluating every arm each round.
    """
    if inst.delays[i] == 1:
        return 1.0
    hit = cache.get(i, t)
    if hit is not None:
        cache.hits += 1
        return hit
    start = int(cache.frontier[i]) + 1
    if start < cache.floor:
        raise HistoryGapError(f"q for arm {i} from round {start} was evicted (floor {cache.floor})")
    if t - 1 > hist.last_round:
        raise HistoryGapError(f"history ends at round {hist.last_round}, need round {t - 1}")
    cache.reserve(t)
    delay = int(inst.delays[i])
    cap = delay / (2.0 * delay - 1.0)
    _fill(cache.q, hist.remaining, hist.rates, i, start, t, delay, cap, hist.d_max, LN_C1)
    cache.frontier[i] = t
    cache.evict_before(t - delay_M(t, hist.d_max))
    return float(cache.q[i, t])


class VertexTable:
    """Exact LP oracle for small instances: argmax over the enumerated vertices.

    When the best vertex is unique (by a relative margin) it is returned;
    otherwise the call falls through to :func:`solve_lp`, so results match
    the flow solver's canonical choice. The flow solver's copy of each
    vertex is memoised so repeated hits return identical floats.
    """

    def __init__(self, inst: Instance, margin: float = 1e-12):
        self.inst = inst
        self.vertices = enumerate_extreme_points(inst)
        self._Z = np.array([v.z.ravel() for v in self.vertices])
        self._memo: dict[int, ExtremePoint] = {}
        self.margin = margin

    def __call__(self, inst: Instance, weights: np.ndarray) -> ExtremePoint:
        vals = self._Z @ weights.ravel()
        best = int(np.argmax(vals))
        top = vals[best]
        scale = max(float(np.max(np.abs(weights))), 1e-300)
        vals[best] = -np.inf
        if vals.size > 1 and np.max(vals) > top - self.margin * scale:
            return solve_lp(inst, weights)
        cached = self._memo.get(best)
        if cached is None:
            cached = solve_lp(inst, weights)
            self._memo[best] = cached
        value = float(np.sum(cached.z * weights))
        return ExtremePoint(z=cached.z, value=value, support=cached.support)


def default_solver(inst: Instance):
    if inst.k * inst.m <= min(9, ENUM_LIMIT):
        return VertexTable(inst)
    return solve_lp


@dataclass
class Diagnostics:
    """Runtime checks gathered over a run."""

    subsample_checks: int = 0
    subsample_flags: int = 0
    lag_violations: int = 0
    lp_solves: int = 0


class UCBCBB:
    """UCB policy with delayed exploitation and history-conditional skipping.

    ``lp_solver(inst, weights)`` returns an optimal vertex; by default a
    vertex table for small instances and the flow solver otherwise.
    ``subsample_c`` is the constant in the counter/sample diagnostic.
    """

    name = "ucb_cbb"

    def __init__(self, inst: Instance, lp_solver=None, subsample_c: float = 1.0, check_facts: bool = True, tie_break: bool = True):
        self.inst = inst
        self.k, self.m = inst.k, inst.m
        self.d_max = inst.d_max
        self.T_c = critical_time(self.d_max)
        self.solver = default_solver(inst) if lp_solver is None else lp_solver
        self.state = UcbState(self.k, self.m)
        self.log = ExtremePointLog()
        self.cache = CompQCache(self.k)
        self.hist = History(self.k, self.d_max)
        self.diag = Diagnostics()
        self.subsample_c = subsample_c
        self.check_facts = check_facts
        self.tie_break = tie_break
        self._caps = play_cap(inst.delays).tolist()
        self._slow_arms = [i for i in range(self.k) if inst.delays[i] > 1]
        self._f = inst.context_probs.tolist()
        self._snapshots: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._cols: dict[int, list[list[float]]] = {}
        self._prev_M: int | None = None
        self._prev_s: int | None = None
        self.M_trace: list[int] = []
        self.log.put(0, self._solve(np.ones((self.k, self.m))))

    def _solve(self, weights: np.ndarray, pulls: np.ndarray | None = None) -> ExtremePoint:
        """Optimal vertex for ``weights``; exact ties go to less-sampled pairs.

        The tie-break adds TIE_EPS / (1 + pulls) to each weight, so the
        returned vertex is optimal for the true weights up to TIE_EPS.
        """
        self.diag.lp_solves += 1
        if pulls is None or not self.tie_break:
            return self.solver(self.inst, weights)
        z = self.solver(self.inst, weights + TIE_EPS / (1.0 + pulls))
        return ExtremePoint(z=z.z, value=float(np.sum(z.z * weights)), support=z.support)

    def vertex(self, s: int) -> ExtremePoint:
        """Z(s), solving LP(s) from the frozen round-s indices on first use."""
        if s in self.log:
            return self.log.get(s)
        try:
            w, pulls = self._snapshots.pop(s)
        except KeyError:
            raise HistoryGapError(f"indices of round {s} were not recorded") from None
        for old in [tau for tau in self._snapshots if tau < s]:
            del self._snapshots[old]
        z = self._solve(w, pulls)
        self.log.put(s, z)
        return z

    def _columns(self, s: int, z: ExtremePoint) -> list[list[float]]:
        cols = self._cols.get(s)
        if cols is None:
            cols = [z.z[:, j].tolist() for j in range(self.m)]
            self._cols = {s: cols}
        return cols

    def _count(self, t: int, z: ExtremePoint) -> None:
        pulls = self.state.pulls
        counters = self.state.counters
        lnt = math.log(t)
        bound = 1.0 / (24.0 * math.e)
        for i, j in z.support:
            l = tp_group_index(float(z.z[i, j]))
            key = (i, j, l)
            n = counters.get(key, 0)
            if n > 0 and n >= self.subsample_c * (2.0**l) * lnt:
                self.diag.subsample_checks += 1
                if pulls[i, j] <= bound * (2.0 ** (-l)) * n:
                    self.diag.subsample_flags += 1
            counters[key] = n + 1

    def step(self, t: int, j: int, blocks: BlockState, coins) -> tuple[int, int, int]:
        M = delay_M(t, self.d_max)
        s = t - M
        if self.check_facts and t >= self.T_c and self._prev_M is not None:
            if M > self._prev_M + 1 or s < self._prev_s:
                self.diag.lag_violations += 1
        self._prev_M, self._prev_s = M, s
        self.M_trace.append(M)

        self._snapshots[t] = (self.state.indices(t), self.state.pulls.copy())
        z = self.vertex(s)
        self.hist.record(blocks.remaining, z.arm_rates())
        self._count(t, z)
        # evaluate every arm so the per-arm fill never reaches evicted rounds
        for arm in self._slow_arms:
            compq(arm, t, self.inst, self.hist, self.cache)

        i = sample_arm(self._columns(s, z)[j], self._f[j], coins.next())
        if i < 0:
            return -1, -1, LP_SKIP
        if blocks.remaining[i]:
            return i, -1, BLOCK
        q = compq(i, t, self.inst, self.hist, self.cache)
        beta = min(1.0, self._caps[i] / q)
        if coins.next() <= beta:
            return i, i, PLAY
        return i, -1, SKIP

    def observe(self, t: int, i: int, j: int, x: float) -> None:
        self.state.update(i, j, x)

    def beta(self, i: int, t: int) -> float:
        """Non-skipping probability of arm i at round t (t must be the current or a past round)."""
        return min(1.0, self._caps[i] / compq(i, t, self.inst, self.hist, self.cache))
