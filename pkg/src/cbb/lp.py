"""Optimal extreme points of the blocking LP.

The LP maximises sum_ij w_ij z_ij subject to per-arm rate caps
sum_j z_ij <= 1/d_i, per-context caps sum_i z_ij <= f_j and z >= 0. It is
a max-weight flow on source -> arm -> context -> sink, which
:func:`solve_lp` solves by successive longest augmenting paths followed
by a cycle-pushing pass that moves the optimum onto a vertex.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from cbb.errors import DomainError, TooLargeError
from cbb.instance import Instance

FEAS_TOL = 1e-9
ENUM_LIMIT = 12


@dataclass(frozen=True, eq=False)
class ExtremePoint:
    z: np.ndarray  # (k, m)
    value: float
    support: tuple[tuple[int, int], ...] = field(default=())

    @classmethod
    def from_z(cls, z: np.ndarray, weights: np.ndarray) -> ExtremePoint:
        z = np.where(np.abs(z) <= 1e-12, 0.0, z)
        z.setflags(write=False)
        support = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(z > 0)))
        return cls(z=z, value=float(np.sum(weights * z)), support=support)

    def arm_rates(self) -> np.ndarray:
        return self.z.sum(axis=1)

    def is_feasible(self, inst: Instance, tol: float = FEAS_TOL) -> bool:
        return bool(
            np.all(self.z >= -1e-12)
            and np.all(self.z.sum(axis=1) <= 1.0 / inst.delays + tol)
            and np.all(self.z.sum(axis=0) <= inst.context_probs + tol)
        )

    def to_dict(self) -> dict:
        return {
            "z": self.z.tolist(),
            "value": self.value,
            "support": [list(p) for p in self.support],
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExtremePoint:
        z = np.array(data["z"], dtype=float)
        z.setflags(write=False)
        return cls(
            z=z, value=float(data["value"]), support=tuple(tuple(p) for p in data["support"])
        )


def _check_weights(inst: Instance, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (inst.k, inst.m):
        raise ValueError(f"weights shape {w.shape} != {(inst.k, inst.m)}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return w


class _FlowNetwork:
    """Residual network for s -> arms -> contexts -> t.

    Node ids: 0 = source, 1..k arms, k+1..k+m contexts, k+m+1 sink. Edges
    are stored in fixed order (source edges, then arm-context pairs by
    arm then context, then sink edges) so every scan is deterministic.
    """

    def __init__(self, caps_arm, caps_ctx, w):
        k, m = w.shape
        self.k, self.m = k, m
        self.n = k + m + 2
        self.sink = k + m + 1
        self.tail: list[int] = []
        self.head: list[int] = []
        self.cap: list[float] = []
        self.cost: list[float] = []
        for i in range(k):
            self._add(0, 1 + i, float(caps_arm[i]), 0.0)
        for i in range(k):
            for j in range(m):
                self._add(1 + i, 1 + k + j, math.inf, float(w[i, j]))
        for j in range(m):
            self._add(1 + k + j, self.sink, float(caps_ctx[j]), 0.0)
        self.flow = [0.0] * len(self.tail)

    def _add(self, u, v, c, w):
        self.tail.append(u)
        self.head.append(v)
        self.cap.append(c)
        self.cost.append(w)

    def end(self, node: int) -> int:
        # source and sink are merged: the flow value itself is free to move
        return 0 if node == self.sink else node

    def residual_arcs(self):
        """Yield (edge, forward?, from, to, gain, room) for arcs with room left."""
        for e in range(len(self.tail)):
            f = self.flow[e]
            room = self.cap[e] - f
            if room > 1e-15:
                yield e, True, self.tail[e], self.head[e], self.cost[e], room
            if f > 1e-15:
                yield e, False, self.head[e], self.tail[e], -self.cost[e], f


def _longest_path(net: _FlowNetwork, tol: float):
    """Bellman-Ford for the max-gain s-t path; no positive cycles exist by invariant."""
    dist = [-math.inf] * net.n
    pred: list[tuple[int, bool, int] | None] = [None] * net.n
    dist[0] = 0.0
    arcs = list(net.residual_arcs())
    for _ in range(net.n - 1):
        changed = False
        for e, fwd, u, v, g, _room in arcs:
            du = dist[u]
            if du == -math.inf:
                continue
            cand = du + g
            if cand > dist[v] + tol:
                dist[v] = cand
                pred[v] = (e, fwd, u)
                changed = True
        if not changed:
            break
    if dist[net.sink] == -math.inf:
        return None, None
    path = []
    v = net.sink
    seen = set()
    while v != 0:
        if v in seen:  # pragma: no cover - guarded by tolerance
            return None, None
        seen.add(v)
        e, fwd, u = pred[v]
        path.append((e, fwd))
        v = u
    path.reverse()
    return dist[net.sink], path


def _find_free_cycle(net: _FlowNetwork, tol: float):
    """Return an undirected cycle of strictly-interior edges, or None.

    An edge is interior when 0 < flow < cap. Source and sink count as one
    node, so an interior s-t path is reported as a cycle too. Cycles come
    back as (edge, orientation) pairs, orientation +1 when the walk goes
    tail -> head.
    """
    adj: dict[int, list[tuple[int, int]]] = {}
    for e in range(len(net.tail)):
        f = net.flow[e]
        if f > tol and f < net.cap[e] - tol:
            u, v = net.end(net.tail[e]), net.end(net.head[e])
            adj.setdefault(u, []).append((e, v))
            adj.setdefault(v, []).append((e, u))
    parent: dict[int, tuple[int, int] | None] = {}
    for root in sorted(adj):
        if root in parent:
            continue
        parent[root] = None
        depth = {root: 0}
        stack = [root]
        while stack:
            u = stack.pop()
            for e, v in adj[u]:
                if parent[u] is not None and parent[u][0] == e:
                    continue
                if v in parent and v in depth:
                    return _cycle_from(net, parent, depth, u, v, e)
                parent[v] = (e, u)
                depth[v] = depth[u] + 1
                stack.append(v)
    return None


def _cycle_from(net, parent, depth, u, v, closing_edge):
    # walk u and v up to their common ancestor
    path_u, path_v = [], []
    a, b = u, v
    while depth[a] > depth[b]:
        e, p = parent[a]
        path_u.append((e, a, p))
        a = p
    while depth[b] > depth[a]:
        e, p = parent[b]
        path_v.append((e, b, p))
        b = p
    while a != b:
        e, p = parent[a]
        path_u.append((e, a, p))
        a = p
        e, p = parent[b]
        path_v.append((e, b, p))
        b = p
    # cycle: v -> u via closing edge, u -> ancestor, ancestor -> v
    steps = [(closing_edge, v, u)]
    steps += [(e, x, y) for e, x, y in path_u]
    steps += [(e, y, x) for e, x, y in reversed(path_v)]
    cycle = []
    for e, x, y in steps:
        forward = net.end(net.tail[e]) == x and net.end(net.head[e]) == y
        cycle.append((e, +1 if forward else -1))
    return cycle


def _push_to_vertex(net: _FlowNetwork, tol: float) -> None:
    """Push flow around interior cycles until the interior edges form a forest."""
    for _ in range(10 * len(net.tail) + 10):
        cycle = _find_free_cycle(net, tol)
        if cycle is None:
            return
        gain = sum(o * net.cost[e] for e, o in cycle)
        direction = 1 if gain >= 0 else -1
        step = math.inf
        for e, o in cycle:
            s = o * direction
            room = net.cap[e] - net.flow[e] if s > 0 else net.flow[e]
            step = min(step, room)
        for e, o in cycle:
            net.flow[e] += o * direction * step
        for e, _o in cycle:
            if abs(net.flow[e]) <= tol:
                net.flow[e] = 0.0
            elif abs(net.cap[e] - net.flow[e]) <= tol:
                net.flow[e] = net.cap[e]
    raise RuntimeError("vertex crossover did not terminate")  # pragma: no cover


def solve_lp(inst: Instance, weights=None) -> ExtremePoint:
    """Optimal basic solution of the LP under ``weights`` (defaults to the true means).

    Deterministic: for fixed inputs the same vertex is returned, and
    ties are resolved by scanning arms and then contexts in index order.
    """
    w = inst.means if weights is None else _check_weights(inst, weights)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    k, m = w.shape
    if scale == 0.0:
        return ExtremePoint.from_z(np.zeros((k, m)), w)
    gain_tol = 1e-12 * scale
    net = _FlowNetwork(1.0 / inst.delays, inst.context_probs, w)
    while True:
        gain, path = _longest_path(net, gain_tol)
        if path is None or gain <= 1e-10 * scale:
            break
        step = min(
            net.cap[e] - net.flow[e] if fwd else net.flow[e] for e, fwd in path
        )
        if step <= 1e-15:
            break  # pragma: no cover
        for e, fwd in path:
            net.flow[e] += step if fwd else -step
        for e, _ in path:
            if abs(net.flow[e]) <= 1e-13:
                net.flow[e] = 0.0
            elif abs(net.cap[e] - net.flow[e]) <= 1e-13:
                net.flow[e] = net.cap[e]
    _push_to_vertex(net, 1e-13)
    z = np.array(net.flow[k : k + k * m], dtype=float).reshape(k, m)
    return ExtremePoint.from_z(z, w)


def enumerate_extreme_points(inst: Instance, weights=None) -> list[ExtremePoint]:
    """Every vertex of the feasible polytope, each once, sorted lexicographically.

    Bases are chosen among the k*m rate columns and k+m slack columns;
    the constraint matrix is an incidence matrix, hence totally
    unimodular, so a basis is non-singular exactly when |det| = 1.
    """
    k, m = inst.k, inst.m
    n = k * m
    if n > ENUM_LIMIT:
        raise TooLargeError(f"k*m = {n} exceeds the enumeration limit {ENUM_LIMIT}")
    w = inst.means if weights is None else _check_weights(inst, weights)
    rows = k + m
    A = np.zeros((rows, n + rows))
    for i in range(k):
        for j in range(m):
            A[i, i * m + j] = 1.0
            A[k + j, i * m + j] = 1.0
    A[:, n:] = np.eye(rows)
    b = np.concatenate([1.0 / inst.delays, inst.context_probs])

    seen: dict[tuple, np.ndarray] = {}
    combos = itertools.combinations(range(n + rows), rows)
    while True:
        chunk = list(itertools.islice(combos, 20000))
        if not chunk:
            break
        idx = np.array(chunk)
        B = A[:, idx].transpose(1, 0, 2)  # (batch, rows, rows)
        dets = np.linalg.det(B)
        ok = np.abs(dets) > 0.5
        if not ok.any():
            continue
        idx, B = idx[ok], B[ok]
        xb = np.linalg.solve(B, np.broadcast_to(b, (B.shape[0], rows))[..., None])[..., 0]
        feas = np.all(xb >= -1e-12, axis=1)
        for cols, vals in zip(idx[feas], xb[feas]):
            z = np.zeros(n)
            sel = cols < n
            z[cols[sel]] = vals[sel]
            z[np.abs(z) <= 1e-12] = 0.0
            key = tuple(np.round(z, 9))
            if key not in seen:
                seen[key] = z.reshape(k, m)
    return [ExtremePoint.from_z(seen[key], w) for key in sorted(seen)]


@dataclass(frozen=True)
class GapReport:
    delta_by_vertex: list[tuple[ExtremePoint, float]]
    delta_max: float
    delta_min: np.ndarray  # (k, m), inf where undefined
    optimum: ExtremePoint


def compute_gaps(inst: Instance, tol: float = FEAS_TOL) -> GapReport:
    """Suboptimality gaps of every vertex against the best one under the true means."""
    verts = enumerate_extreme_points(inst)
    best = max(verts, key=lambda v: v.value)
    deltas = [(v, max(best.value - v.value, 0.0)) for v in verts]
    sub = [(v, g) for v, g in deltas if g > tol]
    delta_max = max((g for _, g in sub), default=0.0)
    delta_min = np.full((inst.k, inst.m), math.inf)
    for v, g in sub:
        mask = v.z > 0
        delta_min[mask] = np.minimum(delta_min[mask], g)
    return GapReport(delta_by_vertex=deltas, delta_max=delta_max, delta_min=delta_min, optimum=best)


def tp_group_index(z_value: float) -> int:
    """The unique l >= 1 with 2**-l < z_value <= 2**-(l-1)."""
    if not (0 < z_value <= 1):
        raise DomainError(f"rate must be in (0, 1], got {z_value}")
    mant, exp = math.frexp(z_value)
    # z = mant * 2**exp with mant in [0.5, 1)
    return 2 - exp if mant == 0.5 else 1 - exp
