"""Problem instances for contextual blocking bandits.

An instance fixes k arms with integer blocking delays, m contexts drawn
i.i.d. with probabilities ``f``, and a k x m matrix of mean rewards.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from cbb.errors import (
    DelayError,
    InstanceError,
    ParamError,
    ProbabilityMassError,
    RangeError,
    UnknownName,
)

MASS_TOL = 1e-12


class RewardKind(str, Enum):
    BERNOULLI = "Bernoulli"
    DETERMINISTIC = "Deterministic"


@dataclass(frozen=True, eq=False)
class Instance:
    """Validated, immutable problem data.

    Use :func:`validate` (or :meth:`from_arrays`) to build one; the
    constructor itself does not check invariants.
    """

    delays: np.ndarray  # (k,) int
    context_probs: np.ndarray  # (m,) float
    means: np.ndarray  # (k, m) float
    reward_kind: RewardKind = RewardKind.BERNOULLI

    @property
    def k(self) -> int:
        return int(self.delays.shape[0])

    @property
    def m(self) -> int:
        return int(self.context_probs.shape[0])

    @property
    def d_max(self) -> int:
        return int(self.delays.max())

    @property
    def alpha(self) -> float:
        """Competitive factor d_max / (2 d_max - 1)."""
        d = self.d_max
        return d / (2 * d - 1)

    @classmethod
    def from_arrays(cls, delays, context_probs, means, reward_kind="Bernoulli") -> Instance:
        return validate(
            {
                "delays": delays,
                "context_probs": context_probs,
                "means": means,
                "reward_kind": reward_kind,
            }
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            np.array_equal(self.delays, other.delays)
            and np.array_equal(self.context_probs, other.context_probs)
            and np.array_equal(self.means, other.means)
            and self.reward_kind == other.reward_kind
        )

    def __hash__(self) -> int:
        return hash((self.delays.tobytes(), self.context_probs.tobytes(), self.means.tobytes()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "m": self.m,
            "delays": [int(d) for d in self.delays],
            "context_probs": [float(f) for f in self.context_probs],
            "means": [[float(x) for x in row] for row in self.means],
            "reward_kind": self.reward_kind.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> Instance:
        return validate(json.loads(text))


def validate(raw: dict[str, Any]) -> Instance:
    """Check an instance candidate and return a frozen :class:`Instance`.

    ``raw`` holds ``delays``, ``context_probs`` and ``means`` (arms x
    contexts); ``k``/``m`` and ``reward_kind`` are optional.
    """
    try:
        delays_raw = np.asarray(raw["delays"])
        f = np.array(raw["context_probs"], dtype=float)
        mu = np.array(raw["means"], dtype=float)
    except KeyError as exc:
        raise InstanceError(f"missing field {exc.args[0]!r}") from None

    if delays_raw.ndim != 1 or f.ndim != 1 or mu.ndim != 2:
        raise InstanceError("delays and context_probs must be vectors, means a matrix")
    k, m = delays_raw.shape[0], f.shape[0]
    if k < 1 or m < 1:
        raise InstanceError("need at least one arm and one context")
    if mu.shape != (k, m):
        raise InstanceError(f"means has shape {mu.shape}, expected {(k, m)}")
    if "k" in raw and int(raw["k"]) != k:
        raise InstanceError(f"k={raw['k']} does not match {k} delays")
    if "m" in raw and int(raw["m"]) != m:
        raise InstanceError(f"m={raw['m']} does not match {m} context probabilities")

    if not np.all(np.equal(np.mod(delays_raw, 1), 0)):
        raise DelayError("delays must be integers")
    delays = delays_raw.astype(np.int64)
    if np.any(delays < 1):
        raise DelayError(f"every delay must be >= 1, got {delays.tolist()}")

    if not np.all(np.isfinite(f)) or np.any(f < 0) or np.any(f > 1):
        raise RangeError("context probabilities must lie in [0, 1]")
    if abs(f.sum() - 1.0) > MASS_TOL:
        raise ProbabilityMassError(f"context probabilities sum to {f.sum()!r}, not 1")
    if not np.all(np.isfinite(mu)) or np.any(mu < 0) or np.any(mu > 1):
        raise RangeError("mean rewards must lie in [0, 1]")

    kind = raw.get("reward_kind", RewardKind.BERNOULLI)
    try:
        kind = RewardKind(kind)
    except ValueError:
        raise InstanceError(f"unknown reward_kind {kind!r}") from None

    for arr in (delays, f, mu):
        arr.setflags(write=False)
    return Instance(delays=delays, context_probs=f, means=mu, reward_kind=kind)


# --- named instances -------------------------------------------------------


def _simplex(rng: np.random.Generator, m: int) -> np.ndarray:
    f = rng.dirichlet(np.ones(m))
    # absorb round-off so the mass check passes exactly
    f[-1] = 1.0 - f[:-1].sum()
    return f


def integral(gap: float) -> Instance:
    if not 0 < gap <= 0.9:
        raise ParamError(f"gap must be in (0, 0.9], got {gap}")
    mu = np.full((3, 3), 0.9 - gap)
    np.fill_diagonal(mu, 0.9)
    return validate({"delays": [3, 3, 3], "context_probs": [1 / 3] * 3, "means": mu})


def noninteg_3x3() -> Instance:
    mu = np.full((3, 3), 0.3)
    np.fill_diagonal(mu, 0.9)
    return validate({"delays": [2, 3, 6], "context_probs": [1 / 3] * 3, "means": mu})


def noninteg_3x3_d6(seed: int = 0) -> Instance:
    rng = np.random.default_rng(seed)
    f = _simplex(rng, 3)
    mu = rng.uniform(0.0, 0.3, size=(3, 3))
    np.fill_diagonal(mu, rng.uniform(0.5, 0.9, size=3))
    return validate({"delays": [6, 6, 6], "context_probs": f, "means": mu})


def noninteg_10x10(seed: int = 0) -> Instance:
    rng = np.random.default_rng(seed)
    f = _simplex(rng, 10)
    delays = rng.choice([8, 9], size=10)
    mu = rng.uniform(0.0, 0.3, size=(10, 10))
    np.fill_diagonal(mu, 0.9)
    return validate({"delays": delays, "context_probs": f, "means": mu})


def gap_instance(k: int, delta: float) -> Instance:
    """k arms of delay k, k equiprobable contexts, mean ``delta`` on the diagonal only."""
    if int(k) != k or k < 1:
        raise ParamError(f"k must be a positive integer, got {k}")
    if not 0 < delta <= 1:
        raise ParamError(f"delta must be in (0, 1], got {delta}")
    k = int(k)
    return validate(
        {"delays": [k] * k, "context_probs": [1 / k] * k, "means": np.eye(k) * delta}
    )


def hardness(d: int, eps: float, R: float, n_dummy: int = 1) -> Instance:
    """Two-context lower-bound instance with deterministic rewards.

    Arm 0 has delay ``d`` and raw rewards R/eps (rare context, prob eps)
    and 1 (common context); both are divided by 1 + R/eps to land in
    [0, 1]. ``n_dummy`` zero-reward arms of delay 1 pad the arm set.
    """
    if int(d) != d or d < 1:
        raise ParamError(f"d must be a positive integer, got {d}")
    if not 0 < eps < 1:
        raise ParamError(f"eps must be in (0, 1), got {eps}")
    if R <= 0:
        raise ParamError(f"R must be positive, got {R}")
    if n_dummy < 0:
        raise ParamError("n_dummy must be non-negative")
    scale = 1.0 + R / eps
    mu = np.zeros((1 + n_dummy, 2))
    mu[0] = [(R / eps) / scale, 1.0 / scale]
    return validate(
        {
            "delays": [int(d)] + [1] * n_dummy,
            "context_probs": [eps, 1.0 - eps],
            "means": mu,
            "reward_kind": RewardKind.DETERMINISTIC,
        }
    )


NAMED = {
    "integral": integral,
    "noninteg_3x3": noninteg_3x3,
    "noninteg_3x3_d6": noninteg_3x3_d6,
    "noninteg_10x10": noninteg_10x10,
    "gap_instance": gap_instance,
    "hardness": hardness,
}


def named_instance(name: str, **params) -> Instance:
    """Build one of the canonical instances by name, e.g. ``named_instance("integral", gap=0.4)``."""
    try:
        factory = NAMED[name]
    except KeyError:
        raise UnknownName(f"no named instance {name!r}; known: {sorted(NAMED)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ParamError(f"bad parameters for {name!r}: {exc}") from None
