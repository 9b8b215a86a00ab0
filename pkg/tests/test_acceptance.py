"""Acceptance criteria at their stated sample sizes and tolerances.

Each test records a one-line verdict that is printed in the terminal
summary, then asserts it.
"""
import pytest

from cbb import checks


def record(criteria, label, results):
    results = results if isinstance(results, list) else [results]
    ok = all(r.passed for r in results)
    failing = [r for r in results if not r.passed]
    shown = failing or results
    detail = "; ".join(r.line() for r in shown[:3])
    if len(shown) > 3:
        detail += f"; ... {len(shown) - 3} more"
    criteria[label] = (ok, detail)
    print(f"criterion {label}: {'PASS' if ok else 'FAIL'}")
    for r in results:
        print("   ", r.line())
    return ok


def test_criterion_1_fi_cbb_exactness(criteria):
    r = checks.fi_exactness(runs=200_000, T=50)
    assert r.seconds < 300
    assert record(criteria, "1", r)


def test_criterion_2_availability_recursion(criteria):
    assert record(criteria, "2", checks.availability_recursion(runs=100_000, T=30))


def test_criterion_3_lp_upper_bound(criteria):
    r = checks.lp_upper_bound(n=20, max_T=8, slack=1e-9)
    assert r.seconds < 120
    assert record(criteria, "3", r)


def test_criterion_4_competitive_ratio(criteria):
    assert record(criteria, "4", checks.competitive_ratio(n=20, T=2000, seeds=60))


def test_criterion_5_sparsity(criteria):
    assert record(criteria, "5", checks.sparsity(instances=10, objectives=1000, enum_instances=10))


def test_criterion_6_gaps(criteria):
    assert record(criteria, "6", checks.gap_values(tol=1e-9))


def test_criterion_7_hardness(criteria):
    results = [checks.hardness_closed_form(n=100, tol=1e-6), checks.hardness_ratio(d=3, eps=1e-4, band=0.02)]
    assert record(criteria, "7", results)


@pytest.mark.slow
def test_criterion_8_simulation_bands(criteria):
    results = checks.simulation_bands(T=10_000, seeds=60)
    assert record(criteria, "8", results)


def test_criterion_9_lag_facts(criteria):
    results = [checks.lag_facts(d_values=range(1, 101)), checks.runtime_lag_checks(T=2000, seeds=3)]
    assert record(criteria, "9", results)


def test_criterion_10_determinism(criteria):
    assert record(criteria, "10", checks.determinism(T=300, seeds=2))
