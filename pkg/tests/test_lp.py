import numpy as np
import pytest
from scipy.optimize import linprog

from cbb.errors import DomainError, TooLargeError
from cbb.instance import gap_instance, validate
from cbb.lp import ExtremePoint, compute_gaps, enumerate_extreme_points, solve_lp, tp_group_index


def random_inst(rng, k, m, max_d=4):
    f = rng.dirichlet(np.ones(m))
    f[-1] = 1 - f[:-1].sum()
    return validate({"delays": rng.integers(1, max_d + 1, k), "context_probs": f, "means": rng.uniform(0, 1, (k, m))})


def linprog_value(inst, w):
    k, m = inst.k, inst.m
    A = []
    b = []
    for i in range(k):
        row = np.zeros((k, m))
        row[i] = 1
        A.append(row.ravel())
        b.append(1 / inst.delays[i])
    for j in range(m):
        row = np.zeros((k, m))
        row[:, j] = 1
        A.append(row.ravel())
        b.append(inst.context_probs[j])
    res = linprog(-np.asarray(w).ravel(), A_ub=np.array(A), b_ub=b, bounds=(0, None), method="highs")
    return -res.fun


def test_trivial():
    z = solve_lp(validate({"delays": [1], "context_probs": [1.0], "means": [[0.5]]}))
    assert z.z.tolist() == [[1.0]]
    assert z.value == 0.5


def test_gap_instance_matching():
    z = solve_lp(gap_instance(3, 0.9))
    assert z.value == pytest.approx(0.9, abs=1e-9)
    assert np.allclose(z.z, np.eye(3) / 3)
    assert z.support == ((0, 0), (1, 1), (2, 2))


@pytest.mark.parametrize("seed", range(30))
def test_matches_linprog_and_is_vertex(seed):
    rng = np.random.default_rng(seed)
    k, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    inst = random_inst(rng, k, m)
    w = rng.uniform(0, 1, (k, m))
    z = solve_lp(inst, w)
    assert z.is_feasible(inst)
    assert z.value == pytest.approx(linprog_value(inst, w), abs=1e-9)
    assert len(z.support) <= k + m
    if k * m <= 9:
        keys = {tuple(np.round(v.z, 9).ravel()) for v in enumerate_extreme_points(inst)}
        assert tuple(np.round(z.z, 9).ravel()) in keys


def test_random_2x2_seed7_against_enumeration():
    inst = random_inst(np.random.default_rng(7), 2, 2)
    best = max(v.value for v in enumerate_extreme_points(inst))
    assert solve_lp(inst).value == pytest.approx(best, abs=1e-9)


def test_deterministic_and_scale_invariant():
    rng = np.random.default_rng(3)
    inst = random_inst(rng, 4, 3)
    w = rng.uniform(0, 1, (4, 3))
    a, b, c = solve_lp(inst, w), solve_lp(inst, w), solve_lp(inst, 3.5 * w)
    assert np.array_equal(a.z, b.z)
    assert a.support == c.support
    assert np.allclose(a.z, c.z, atol=1e-12)


def test_degenerate_all_equal_weights_is_vertex():
    inst = gap_instance(3, 0.5)
    z = solve_lp(inst, np.ones((3, 3)))
    keys = {tuple(np.round(v.z, 9).ravel()) for v in enumerate_extreme_points(inst)}
    assert tuple(np.round(z.z, 9).ravel()) in keys
    assert z.value == pytest.approx(1.0)


def test_enumeration_1d():
    inst = validate({"delays": [2], "context_probs": [1.0], "means": [[1.0]]})
    vals = sorted(float(v.z[0, 0]) for v in enumerate_extreme_points(inst))
    assert vals == [0.0, 0.5]
    inst = validate({"delays": [2], "context_probs": [0.3, 0.7], "means": [[1.0, 0.0]]})
    zs = sorted(tuple(v.z.ravel()) for v in enumerate_extreme_points(inst))
    assert (0.3, 0.0) in [tuple(np.round(z, 12)) for z in zs]


def test_gap2_vertex_coordinates():
    for v in enumerate_extreme_points(gap_instance(2, 0.5)):
        assert set(np.round(v.z.ravel(), 12)) <= {0.0, 0.5}


def test_enumeration_guard():
    inst = validate({"delays": [1] * 4, "context_probs": [0.25] * 4, "means": np.zeros((4, 4))})
    with pytest.raises(TooLargeError):
        enumerate_extreme_points(inst)


def test_enumeration_counts_and_sparsity():
    # 2x2 transportation polytope with slack: compare to brute-force over all bases
    rng = np.random.default_rng(11)
    for _ in range(5):
        inst = random_inst(rng, 2, 3)
        verts = enumerate_extreme_points(inst)
        assert len({tuple(np.round(v.z, 9).ravel()) for v in verts}) == len(verts)
        for v in verts:
            assert v.is_feasible(inst)
            assert len(v.support) <= inst.k + inst.m


def test_gaps_worked_example():
    g = compute_gaps(gap_instance(3, 0.9))
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(g.delta_min[off], 0.6, atol=1e-9)
    assert np.allclose(np.diag(g.delta_min), 0.3, atol=1e-9)
    assert g.delta_max == pytest.approx(0.9)
    assert g.optimum.value == pytest.approx(0.9)
    assert all(d >= 0 for _, d in g.delta_by_vertex)


def test_gaps_single_nonzero_vertex():
    g = compute_gaps(validate({"delays": [2], "context_probs": [1.0], "means": [[0.8]]}))
    assert g.delta_max == pytest.approx(0.4)


@pytest.mark.parametrize("z, l", [(1.0, 1), (0.3, 2), (0.5, 2), (0.51, 1), (0.25, 3), (0.2, 3), (2**-10, 11)])
def test_tp_group(z, l):
    assert tp_group_index(z) == l
    assert 2.0**-l < z <= 2.0 ** (-l + 1)


@pytest.mark.parametrize("z", [0.0, -0.1, 1.01])
def test_tp_group_domain(z):
    with pytest.raises(DomainError):
        tp_group_index(z)


def test_extreme_point_json():
    z = solve_lp(gap_instance(2, 0.7))
    back = ExtremePoint.from_dict(z.to_dict())
    assert np.array_equal(back.z, z.z) and back.support == z.support and back.value == z.value
