"""Baseline policy and exact oracles.

* :class:`UCBGreedy` plays the free arm with the highest UCB index.
* :func:`clairvoyant_reward` is the brute-force benchmark Rew*(T): the
  expected value, over context sequences, of the best blocking-feasible
  schedule chosen with the whole sequence in view.
* :func:`hardness_analysis` evaluates the two-context lower-bound family.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from cbb.environment import BLOCK, PLAY, BlockState
from cbb.errors import ParamError, TooLargeError
from cbb.instance import Instance
from cbb.lp import solve_lp
from cbb.ucb_cbb import UcbState

ORACLE_LIMIT = 10**7
GRID = 1001


class UCBGreedy:
    """Play the available arm with the highest UCB index for the observed context.

    No delayed exploitation: indices are those of the current round. Ties
    go to the lowest arm index. With every arm blocked the round is a
    block event.
    """

    name = "ucb_greedy"

    def __init__(self, inst: Instance):
        self.inst = inst
        self.state = UcbState(inst.k, inst.m)

    def step(self, t: int, j: int, blocks: BlockState, coins=None) -> tuple[int, int, int]:
        rem = blocks.remaining
        free = [i for i in range(self.inst.k) if rem[i] == 0]
        if not free:
            return -1, -1, BLOCK
        idx = self.state.indices(t)[:, j]
        best = max(free, key=lambda i: (idx[i], -i))
        return best, best, PLAY

    def observe(self, t: int, i: int, j: int, x: float) -> None:
        self.state.update(i, j, x)


# --- clairvoyant oracle ----------------------------------------------------


class _StateSpace:
    """Mixed-radix encoding of blocking vectors (remaining_i in 0..d_i-1)."""

    def __init__(self, delays):
        self.delays = [int(d) for d in delays]
        self.size = math.prod(self.delays)
        grids = np.indices(self.delays).reshape(len(self.delays), -1).T  # (S, k)
        self.states = grids
        radix = np.cumprod([1] + self.delays[:0:-1])[::-1]
        self._radix = radix

        def encode(arr):
            return arr @ self._radix

        idle = np.maximum(grids - 1, 0)
        # next state index for "no play" and for playing arm i (-1 if blocked)
        self.next_idle = encode(idle)
        self.next_play = []
        for i, d in enumerate(self.delays):
            nxt = idle.copy()
            nxt[:, i] = d - 1
            self.next_play.append(np.where(grids[:, i] == 0, encode(nxt), -1))
        self.start = 0  # all arms free


def _backup(V: np.ndarray, mu_c: np.ndarray, space: _StateSpace) -> np.ndarray:
    """One backward step. V is (n, S) values of the next round; mu_c is (n, k)."""
    best = V[:, space.next_idle]
    for i, nxt in enumerate(space.next_play):
        ok = nxt >= 0
        cand = np.full_like(best, -np.inf)
        cand[:, ok] = mu_c[:, i : i + 1] + V[:, nxt[ok]]
        np.maximum(best, cand, out=best)
    return best


@dataclass
class OracleResult:
    expected_reward: float
    per_sequence: dict[tuple[int, ...], tuple[float, float]] | None = None


def clairvoyant_reward(inst: Instance, T: int, keep_sequences: bool = False) -> OracleResult:
    """Rew*(T) by enumerating all m^T context sequences.

    Works backwards over suffixes: the value table of suffixes of length L+1
    is built from that of length L, one row per suffix, so each sequence's
    dynamic program shares work with every sequence having the same tail.
    """
    if T < 0:
        raise ParamError("T must be non-negative")
    space = _StateSpace(inst.delays)
    m = inst.m
    if m**T * space.size > ORACLE_LIMIT:
        raise TooLargeError(f"m^T * prod(d) = {m**T * space.size} exceeds {ORACLE_LIMIT}")
    mu = inst.means
    V = np.zeros((1, space.size))
    for _ in range(T):
        # new suffix (c, old suffix) has row index c * len(V) + old
        n = V.shape[0]
        blocks = [_backup(V, np.repeat(mu[:, c][None, :], n, axis=0), space) for c in range(m)]
        V = np.concatenate(blocks, axis=0)
    values = V[:, space.start]
    # probability of each sequence in the same row order (first round most significant)
    probs = np.ones(1)
    for _ in range(T):
        probs = np.concatenate([inst.context_probs[c] * probs for c in range(m)])
    total = float(probs @ values)
    per = None
    if keep_sequences:
        per = {}
        for row, seq in enumerate(itertools.product(range(m), repeat=T)):
            per[seq] = (float(probs[row]), float(values[row]))
    return OracleResult(expected_reward=max(total, 0.0), per_sequence=per)


def clairvoyant_path_reward(inst: Instance, sequences) -> np.ndarray:
    """Best achievable total mean reward for each given context sequence.

    ``sequences`` is (n, T) of context indices; the dynamic program runs
    over all n sequences at once.
    """
    seqs = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
    n, T = seqs.shape
    space = _StateSpace(inst.delays)
    mu = inst.means
    V = np.zeros((n, space.size))
    for t in range(T - 1, -1, -1):
        V = _backup(V, mu[:, seqs[:, t]].T, space)
    return V[:, space.start]


def lp_upper_bound(inst: Instance, T: int) -> float:
    return T * solve_lp(inst).value


def alpha_regret(inst: Instance, policy_reward: float, T: int, alpha: float, upper_bound_kind: str = "lp_times_T") -> float:
    """alpha * UB - policy_reward, with UB = Rew*(T) or T times the LP value."""
    if not 0 < alpha <= 1:
        raise ParamError(f"alpha must be in (0, 1], got {alpha}")
    if upper_bound_kind == "exact_oracle":
        ub = clairvoyant_reward(inst, T).expected_reward
    elif upper_bound_kind == "lp_times_T":
        ub = lp_upper_bound(inst, T)
    else:
        raise ParamError(f"unknown upper_bound_kind {upper_bound_kind!r}")
    return alpha * ub - policy_reward


# --- hardness family -------------------------------------------------------


@dataclass
class HardnessRecord:
    d: int
    eps: float
    R: float
    f_opt: float
    q_opt: tuple[float, float]
    clairvoyant_lb: float
    ratio_ub: float

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "eps": self.eps,
            "R": self.R,
            "f_opt": self.f_opt,
            "q_opt": list(self.q_opt),
            "clairvoyant_lb": self.clairvoyant_lb,
            "ratio_ub": self.ratio_ub,
        }


def hardness_objective(q1, q2, d: int, eps: float, R: float):
    return (R * q1 + (1 - eps) * q2) / (1 + (d - 1) * (eps * q1 + (1 - eps) * q2))


def block_policy_reward(d: int, eps: float, R: float) -> float:
    """Average reward of the block schedule that waits for the rare context.

    Time is cut into blocks of B = d * ceil(1/sqrt(eps)) rounds; this lower
    bounds the clairvoyant's per-round reward.
    """
    B = d * math.ceil(1 / math.sqrt(eps))
    return R * (1 - d / B) * (1 - eps) ** (B - 1) + (1 / d - 1 / B) * (1 - eps) ** B


def hardness_analysis(d: int, eps: float, R: float, grid: int = GRID) -> HardnessRecord:
    """Grid-maximise the best LP-based online rate and compare with the block schedule.

    ``ratio_ub`` upper bounds the competitive ratio an online policy can
    reach against the clairvoyant on this instance.
    """
    if int(d) != d or d < 2:
        raise ParamError(f"d must be an integer >= 2, got {d}")
    if not 0 < eps < 1:
        raise ParamError(f"eps must be in (0, 1), got {eps}")
    if not R > 0:
        raise ParamError(f"R must be positive, got {R}")
    d = int(d)
    g = np.linspace(0.0, 1.0, grid)
    F = hardness_objective(g[:, None], g[None, :], d, eps, R)
    a, b = np.unravel_index(int(np.argmax(F)), F.shape)
    f_opt = float(F[a, b])
    lb = block_policy_reward(d, eps, R)
    return HardnessRecord(
        d=d,
        eps=float(eps),
        R=float(R),
        f_opt=f_opt,
        q_opt=(float(g[a]), float(g[b])),
        clairvoyant_lb=lb,
        ratio_ub=f_opt / lb,
    )
