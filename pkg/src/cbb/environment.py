"""Nature: context draws, reward draws and arm blocking state."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cbb.errors import BlockedPlayError
from cbb.instance import Instance, RewardKind

# event codes used in traces
PLAY, LP_SKIP, SKIP, BLOCK = 0, 1, 2, 3
EVENT_NAMES = {PLAY: "play", LP_SKIP: "lp_skip", SKIP: "skip", BLOCK: "block"}

# stream ids for purpose-split randomness
CONTEXT_STREAM, REWARD_STREAM, POLICY_STREAM = 0, 1, 2

BLOCK_SIZE = 1024


def _cdf(inst: Instance) -> np.ndarray:
    cdf = np.cumsum(inst.context_probs)
    cdf[-1] = 1.0
    return cdf


def context_from_uniform(cdf: np.ndarray, u):
    """Inverse CDF over the fixed context order; zero-mass contexts are never hit."""
    return np.searchsorted(cdf, u, side="right")


def sample_context(inst: Instance, rng: np.random.Generator) -> int:
    return int(context_from_uniform(_cdf(inst), rng.random()))


def reward_from_uniform(inst: Instance, i: int, j: int, u: float) -> float:
    mu = inst.means[i, j]
    if inst.reward_kind is RewardKind.DETERMINISTIC:
        return float(mu)
    return 1.0 if u < mu else 0.0


def sample_reward(inst: Instance, i: int, j: int, rng: np.random.Generator) -> float:
    return reward_from_uniform(inst, i, j, rng.random())


class UniformStream:
    """Counter-style uniform stream: the n-th draw depends only on (seed, purpose, sub, n).

    Draws come in blocks of ``BLOCK_SIZE``; block b is generated from its
    own seed sequence keyed by (seed, purpose, sub, b), so any draw can
    be reproduced without replaying the ones before it.
    """

    def __init__(self, seed: int, purpose: int, sub: int = 0):
        self._key = (int(seed), int(purpose), int(sub))
        self._b = -1
        self._blk: list[float] = []
        self._pos = 0

    def block(self, b: int) -> np.ndarray:
        seed, purpose, sub = self._key
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(purpose, sub, b))
        return np.random.Generator(np.random.Philox(ss)).random(BLOCK_SIZE)

    def at(self, n: int) -> float:
        b = n // BLOCK_SIZE
        if b != self._b:
            self._blk = self.block(b).tolist()
            self._b = b
        return self._blk[n - b * BLOCK_SIZE]

    def next(self) -> float:
        u = self.at(self._pos)
        self._pos += 1
        return u

    def array(self, n: int, start: int = 0) -> np.ndarray:
        """Draws start .. start+n-1 as an array."""
        if n <= 0:
            return np.empty(0)
        b0, b1 = start // BLOCK_SIZE, (start + n - 1) // BLOCK_SIZE
        flat = np.concatenate([self.block(b) for b in range(b0, b1 + 1)])
        off = start - b0 * BLOCK_SIZE
        return flat[off : off + n]


class Nature:
    """Context and reward realisations for one sample path.

    Both are keyed by (seed, round), so two policies run against the same
    ``Nature`` see identical contexts and reward coins.
    """

    def __init__(self, inst: Instance, seed: int):
        self.inst = inst
        self.seed = seed
        self._cdf = _cdf(inst)
        self._ctx = UniformStream(seed, CONTEXT_STREAM)
        self._rew = UniformStream(seed, REWARD_STREAM)

    def context(self, t: int) -> int:
        """Context of round t (t >= 1)."""
        return int(context_from_uniform(self._cdf, self._ctx.at(t - 1)))

    def contexts(self, T: int) -> np.ndarray:
        return context_from_uniform(self._cdf, self._ctx.array(T))

    def reward(self, i: int, j: int, t: int) -> float:
        return reward_from_uniform(self.inst, i, j, self._rew.at(t - 1))


@dataclass
class BlockState:
    """Rounds until each arm is free again (0 = available now)."""

    remaining: list[int]

    @classmethod
    def fresh(cls, inst: Instance) -> BlockState:
        return cls([0] * inst.k)

    def available(self, i: int) -> bool:
        return self.remaining[i] == 0

    def advance(self, delays, action: int | None) -> None:
        """In-place version of :func:`apply_action`."""
        rem = self.remaining
        if action is not None and action >= 0:
            if rem[action] != 0:
                raise BlockedPlayError(f"arm {action} played while blocked for {rem[action]} rounds")
        for i, r in enumerate(rem):
            if r:
                rem[i] = r - 1
        if action is not None and action >= 0:
            rem[action] = int(delays[action]) - 1

    def copy(self) -> BlockState:
        return BlockState(list(self.remaining))


def apply_action(state: BlockState, inst: Instance, action: int | None) -> BlockState:
    """Blocking state at the start of the next round after ``action`` (None = no play)."""
    new = state.copy()
    new.advance(inst.delays, action)
    return new
