import numpy as np
import pytest

from online_alloc.diagnostics import (
    EventRow,
    analytic_bounds,
    event_stats,
    exact_martingale_R,
    exact_martingale_S,
    exact_martingale_check,
    good_events,
    martingale_R,
    martingale_S,
    offline_profile,
    phi_trace,
    sandwich,
    overload_frequency,
)
from online_alloc.generators import WorstCaseSpec, build_worst_case, feasibility_instance, make_rng, random_linear_instance
from online_alloc.lp import offline_optimum
from online_alloc.model import Instance, Item, LinearSimplex
from online_alloc.schedule import breakpoint, num_levels


def _line(loads, values=None, b=1.0):
    values = np.ones(len(loads)) if values is None else values
    items = tuple(Item(LinearSimplex([v]), [[a]]) for a, v in zip(loads, values))
    return Instance([b], items)


def test_R_examples():
    inst = _line([0.25] * 4)
    tr = martingale_R(inst, np.ones((4, 1)), [2, 0, 3, 1], 0)
    np.testing.assert_allclose(tr.values, 0.0, atol=1e-15)
    inst = _line([0.1, 0.2, 0.3, 0.4])
    tr = martingale_R(inst, np.ones((4, 1)), [3, 1, 0, 2], 0)
    assert tr.at(1) == pytest.approx(0.0, abs=1e-15)
    assert tr.at(4) == pytest.approx(0.3 - 0.25)
    with pytest.raises(ValueError):
        martingale_R(_line([0.6, 0.6]), np.ones((2, 1)), [0, 1], 0)


def test_S_examples():
    inst = _line([0.1] * 4, [2.0] * 4)
    tr = martingale_S(inst, np.ones((4, 1)), 8.0, [1, 0, 2, 3])
    np.testing.assert_allclose(tr.values, 0.0, atol=1e-15)
    inst = _line([0.1] * 4, [1.0, 2.0, 3.0, 4.0])
    assert martingale_S(inst, np.ones((4, 1)), 10.0, [0, 1, 2, 3]).at(1) == pytest.approx(0.0, abs=1e-15)


def test_exact_martingale_small():
    rng = np.random.default_rng(0)
    for n in (2, 4, 6):
        inst = _line(rng.uniform(0, 1 / n, n), rng.uniform(0, 5, n))
        X = np.ones((n, 1))
        assert exact_martingale_R(inst, X, 0).passed(1e-12)
        assert exact_martingale_S(inst, X, 3.0).passed(1e-12)


def test_exact_check_small_vector():
    v = np.array([0.0, 1.0, 5.0])
    res = exact_martingale_check(v, 0.0)
    assert res.passed() and res.comparisons > 0
    with pytest.raises(ValueError):
        exact_martingale_check(np.ones(9), 0.0)


def test_balanced_instance_has_no_B_failures():
    inst = _line([0.01] * 50, [1.0] * 50)
    p_star, X, _ = offline_optimum(inst)
    B, C = good_events(inst, offline_profile(inst, X, p_star), make_rng(3).permutation(50), 0.1)
    assert B.all() and C.all()


@pytest.fixture(scope="module")
def phi_setup():
    inst = build_worst_case(WorstCaseSpec(2, 40, 1))
    p_star, X, _ = offline_optimum(inst)
    return inst, p_star, X


def test_phi_starts_at_2m(phi_setup):
    inst, p_star, X = phi_setup
    for seed in range(3):
        tr = phi_trace(inst, make_rng(seed).permutation(inst.n), 0.25, 1 / 40, X, p_star)
        assert tr.values[0] == pytest.approx(2 * inst.m)
        assert tr.t0 == round(inst.n * 0.25)


def test_phi_zero_after_failed_event(phi_setup):
    inst, p_star, X = phi_setup
    # an inflated P* breaks the q-bound from the first step on
    tr = phi_trace(inst, make_rng(0).permutation(inst.n), 0.25, 1 / 40, X, 10 * p_star)
    assert tr.values[0] == pytest.approx(2 * inst.m)
    np.testing.assert_array_equal(tr.values[1:], 0.0)
    first_zero = np.argmax(tr.values == 0)
    assert np.all(tr.values[first_zero:] == 0)


def test_analytic_bounds():
    b = analytic_bounds(4, 0.25, 0.002)
    L = num_levels(0.25)
    e6 = np.exp(-0.0625 / 0.012)
    assert b["union_B"] == pytest.approx(4 * L * e6)
    assert b["overload"] == pytest.approx(4 * (L + 1) * e6)
    assert b["low_estimate"] == pytest.approx(np.exp(-0.0625 / 0.008) + 4 * e6)


def test_vacuous_rows():
    assert EventRow("x", 0.9, 3.0).status == "vacuous"
    assert EventRow("x", 0.1, 0.2).status == "ok"
    assert EventRow("x", 0.3, 0.2).status == "exceeded"


def test_event_stats_vacuous_with_large_gamma(phi_setup):
    inst, p_star, X = phi_setup
    stats = event_stats(inst, 0.25, 1.0, 20, 7)
    assert stats.perms == 20
    rows = stats.rows()
    by_name = {r.name: r for r in rows}
    assert by_name["union_B"].status == "vacuous" and by_name["union_C"].status == "vacuous"
    assert all(r.vacuous == (r.bound >= 1) for r in rows)
    assert stats.consistent
    assert all(0 <= r.estimate <= 1 for r in rows)


def test_event_stats_balanced_instance():
    inst = _line([0.01] * 40, [1.0] * 40)
    stats = event_stats(inst, 0.25, 0.01, 10, 1)
    assert stats.union_B == 0.0


def test_overload_frequency_runs():
    inst, _ = feasibility_instance(200, 2, 0)
    freq, bound = overload_frequency(inst, 0.25, 10, 0)
    assert 0 <= freq <= 1 and bound > 0


def test_sandwich_on_random_prefixes():
    for seed in range(5):
        inst = random_linear_instance(40, 3, 2, 0.6, seed)
        p_star, X, y = offline_optimum(inst)
        sigma = make_rng(seed).permutation(inst.n)
        for h in range(num_levels(0.1)):
            lo, mid, hi = sandwich(inst, sigma, h, 0.1, X, y)
            assert lo <= mid + 1e-6 and mid <= hi + 1e-6
