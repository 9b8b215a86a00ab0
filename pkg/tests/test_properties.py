"""Randomised invariants over generated instances."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cbb.baselines import clairvoyant_reward
from cbb.environment import BlockState
from cbb.fi_cbb import build_schedule
from cbb.instance import validate
from cbb.lp import solve_lp, tp_group_index


@st.composite
def instances(draw, max_k=4, max_m=4, max_d=5):
    k = draw(st.integers(1, max_k))
    m = draw(st.integers(1, max_m))
    delays = draw(st.lists(st.integers(1, max_d), min_size=k, max_size=k))
    raw = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m)))
    f = raw / raw.sum()
    f[-1] = 1.0 - f[:-1].sum()
    mu = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=k * m, max_size=k * m))).reshape(k, m)
    return validate({"delays": delays, "context_probs": f, "means": mu})


@settings(max_examples=60, deadline=None)
@given(instances())
def test_solution_is_feasible_sparse_vertex(inst):
    z = solve_lp(inst)
    assert z.is_feasible(inst)
    assert len(z.support) <= inst.k + inst.m
    assert z.value >= -1e-12


@settings(max_examples=40, deadline=None)
@given(instances())
def test_schedule_invariants(inst):
    z = solve_lp(inst)
    s = build_schedule(inst, z, 120)
    cap = inst.delays / (2 * inst.delays - 1)
    assert np.all(s.q[:, 0] == 1)
    assert np.all((s.q > 0) & (s.q <= 1))
    assert np.all(s.beta * s.q <= cap[:, None] + 1e-12)
    assert np.allclose(s.beta, np.minimum(1, cap[:, None] / s.q))


@settings(max_examples=30, deadline=None)
@given(instances(max_k=2, max_m=2, max_d=3), st.integers(1, 6))
def test_lp_bounds_clairvoyant(inst, T):
    rew = clairvoyant_reward(inst, T).expected_reward
    d = inst.d_max
    assert T * solve_lp(inst).value >= (1 - (d - 1) / (d - 1 + T)) * rew - 1e-9


@given(st.floats(min_value=1e-300, max_value=1.0, exclude_min=False))
def test_tp_group_brackets(z):
    if z <= 0:
        return
    l = tp_group_index(z)
    assert l >= 1
    assert 2.0**-l < z <= 2.0 ** (-l + 1)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.lists(st.integers(-1, 3), max_size=30))
def test_blocking_counters_bounded(delays, actions):
    inst = validate({"delays": delays, "context_probs": [1.0], "means": np.zeros((len(delays), 1))})
    s = BlockState.fresh(inst)
    for a in actions:
        if a >= len(delays) or (a >= 0 and not s.available(a)):
            a = -1
        s.advance(inst.delays, a)
        assert all(0 <= r <= d - 1 for r, d in zip(s.remaining, delays))
