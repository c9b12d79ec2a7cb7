import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from online_alloc.model import (
    INFEASIBLE,
    ConcaveLog,
    ConcavePower,
    ConcaveScalar,
    Instance,
    Item,
    LinearSimplex,
    LinearSimplexEq,
    assign_from_dual,
    conjugate_value,
    eval_utility,
    gamma_of_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    objective,
    save_instance,
    within_budget,
)


def test_linear_evaluation():
    assert eval_utility(LinearSimplex([3.0, 1.0]), [1.0, 0.0]) == 3.0


def test_linear_domain_violation():
    assert eval_utility(LinearSimplex([3.0, 1.0]), [0.6, 0.6]) is INFEASIBLE
    assert eval_utility(LinearSimplex([3.0, 1.0]), [-1e-9, 0.0]) is INFEASIBLE
    assert eval_utility(LinearSimplex([3.0, 1.0]), [0.5, 0.5 + 1e-13]) == pytest.approx(2.0)


def test_power_evaluation():
    assert eval_utility(ConcavePower(1.0, 0.5), [0.25]) == pytest.approx(0.5)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_utility(LinearSimplex([1.0, 2.0]), [1.0])
    with pytest.raises(ValueError):
        assign_from_dual(LinearSimplex([1.0, 2.0]), [1.0, 2.0, 3.0])


def test_assign_picks_most_negative_reduced_cost():
    x = assign_from_dual(LinearSimplex([3.0, 1.0]), [2.0, 2.0])
    np.testing.assert_array_equal(x, [1.0, 0.0])


def test_assign_rejects_when_all_costs_positive():
    np.testing.assert_array_equal(assign_from_dual(LinearSimplex([1.0, 1.0]), [2.0, 2.0]), [0.0, 0.0])


def test_assign_tie_rules():
    f = LinearSimplex([2.0, 2.0])
    np.testing.assert_array_equal(assign_from_dual(f, [2.0, 2.0]), [0.0, 0.0])
    np.testing.assert_array_equal(assign_from_dual(f, [2.0, 2.0], accept_ties=True), [1.0, 0.0])
    np.testing.assert_array_equal(assign_from_dual(f, [1.0, 1.0]), [1.0, 0.0])  # lowest index
    # a zero-utility option is never taken, even on a tie
    np.testing.assert_array_equal(assign_from_dual(LinearSimplex([0.0]), [0.0], accept_ties=True), [0.0])


def test_assign_eq_always_picks_a_vertex():
    f = LinearSimplexEq([1.0, 1.0, 0.0])
    np.testing.assert_array_equal(assign_from_dual(f, [5.0, 4.0, 9.0]), [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(assign_from_dual(f, [3.0, 3.0, 3.0]), [1.0, 0.0, 0.0])
    assert eval_utility(f, [0.0, 0.0, 0.0]) is INFEASIBLE


def test_concave_assign_against_grid():
    f = ConcavePower(1.0, 0.5)
    x = assign_from_dual(f, [1.0])
    assert x[0] == pytest.approx(0.25)
    grid = np.linspace(0.0, 1.0, 10001)
    vals = grid - 1.0 * np.sqrt(grid)
    assert 1.0 * x[0] - f.evaluate(x) <= vals.min() + 1e-9


def test_concave_assign_endpoints():
    f = ConcaveLog(2.0, 1.0)  # f'(0)=2, f'(1)=1
    assert assign_from_dual(f, [2.5])[0] == 0.0
    assert assign_from_dual(f, [0.5])[0] == 1.0
    assert assign_from_dual(f, [1.5])[0] == pytest.approx(1 / 3)


def test_conjugate_values():
    assert conjugate_value(LinearSimplex([3.0, 1.0]), [2.0, 2.0]) == -1.0
    assert conjugate_value(LinearSimplex([1.0, 1.0]), [2.0, 2.0]) == 0.0
    assert conjugate_value(ConcavePower(1.0, 0.5), [1.0]) == pytest.approx(-0.25)


def test_generic_concave_bisection_matches_closed_form():
    g = ConcaveScalar(lambda x: np.log1p(3 * x) / 3, lambda x: 1 / (1 + 3 * x))
    h = ConcaveLog(1.0, 3.0)
    for v in (0.3, 0.5, 0.9):
        assert g.assign([v])[0] == pytest.approx(h.assign([v])[0], abs=1e-12)


def test_concave_shape_checks():
    with pytest.raises(ValueError):
        ConcaveScalar(lambda x: x * x, lambda x: 2 * x)  # convex
    with pytest.raises(ValueError):
        ConcaveScalar(lambda x: 1 + x, lambda x: 1.0)  # f(0) != 0


def test_invariants_on_construction():
    with pytest.raises(ValueError):
        LinearSimplex([-1.0])
    with pytest.raises(ValueError):
        Item(LinearSimplex([1.0]), [[-0.1]])
    with pytest.raises(ValueError):
        Item(LinearSimplex([1.0, 2.0]), [[1.0]])
    with pytest.raises(ValueError):
        Instance([0.0], (Item(LinearSimplex([1.0]), [[1.0]]),))
    with pytest.raises(ValueError):
        Instance([1.0, 1.0], (Item(LinearSimplex([1.0]), [[1.0]]),))


def test_objective_and_budget():
    items = (Item(LinearSimplex([2.0]), [[0.6]]), Item(LinearSimplex([1.0]), [[0.6]]))
    inst = Instance([1.0], items)
    assert objective(inst, [[1.0], [0.0]]) == 2.0
    assert objective(inst, [[1.0], [1.0]]) is INFEASIBLE
    assert objective(inst, [[0.0], [1.0]], order=[1, 0]) == 2.0
    assert within_budget([1.0 + 5e-10], np.array([1.0]))
    assert not within_budget([1.0 + 2e-9], np.array([1.0]))


def test_gamma_of_instance():
    items = (Item(LinearSimplex([4.0]), [[1.0], [0.0]]), Item(LinearSimplex([1.0]), [[0.0], [2.0]]))
    g = gamma_of_instance(Instance([10.0, 10.0], items), 5.0)
    assert g.bid == pytest.approx(0.2)
    assert g.utility == pytest.approx(0.8)
    assert g.gamma == pytest.approx(0.8)


def test_json_round_trip(tmp_path):
    items = (
        Item(LinearSimplex([1.0, 2.0]), [[0.1, 0.2], [0.3, 0.0]]),
        Item(LinearSimplex([0.5, 0.0]), [[0.0, 0.0], [0.1, 0.1]]),
    )
    inst = Instance([1.0, 2.0], items)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.n == 2 and back.m == 2 and back.k == 2
    np.testing.assert_array_equal(back.A_stack, inst.A_stack)
    np.testing.assert_array_equal(back.linear_values, inst.linear_values)
    concave = Instance([1.0], (Item(ConcavePower(2.0, 0.5), [[1.0]]), Item(ConcaveLog(1.0, 2.0), [[0.5]])))
    again = instance_from_dict(instance_to_dict(concave))
    assert again.items[0].f.evaluate([0.25]) == pytest.approx(1.0)
    bad = instance_to_dict(inst)
    bad["n"] = 5
    with pytest.raises(ValueError):
        instance_from_dict(bad)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 5), min_size=1, max_size=5).flatmap(
        lambda c: st.tuples(st.just(c), st.lists(st.floats(-5, 5), min_size=len(c), max_size=len(c)))
    )
)
def test_linear_assign_is_a_minimizer(cv):
    c, v = cv
    f = LinearSimplex(c)
    x = assign_from_dual(f, v)
    best = v @ x - f.evaluate(x)
    V = f.vertices()
    assert best <= min(float(np.asarray(v) @ z - f.evaluate(z)) for z in V) + 1e-12
    assert conjugate_value(f, v) == pytest.approx(best)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.2, 1.0), st.floats(0.0, 5.0))
def test_power_assign_is_a_minimizer(a, p, v):
    f = ConcavePower(a, p)
    x = assign_from_dual(f, [v])
    grid = np.linspace(0.0, 1.0, 2001)
    vals = v * grid - a * grid**p
    assert v * x[0] - f.evaluate(x) <= vals.min() + 1e-9


def _random_domain_points(f, rng, count):
    if isinstance(f, LinearSimplexEq):
        return rng.dirichlet(np.ones(f.k), size=count)
    if isinstance(f, LinearSimplex):
        z = rng.dirichlet(np.ones(f.k + 1), size=count)[:, : f.k]
        return z
    return rng.uniform(0, 1, size=(count, 1))


@pytest.mark.parametrize(
    "f",
    [LinearSimplex([3.0, 1.0, 0.5]), LinearSimplexEq([1.0, 2.0]), ConcavePower(2.0, 0.4), ConcaveLog(1.5, 4.0)],
    ids=["linear", "linear-eq", "power", "log"],
)
def test_fenchel_inequality_on_random_points(f, rng):
    for _ in range(5):
        v = rng.uniform(0, 4, size=f.k)
        conj = conjugate_value(f, v)
        Z = _random_domain_points(f, rng, 1000)
        vals = Z @ v - np.array([f.evaluate(z) for z in Z])
        assert vals.min() >= conj - 1e-9


def test_linear_assign_scale_covariance(rng):
    for _ in range(50):
        c = rng.uniform(0, 1, 4)
        v = rng.uniform(0, 1, 4)
        lam = rng.uniform(0.1, 10)
        np.testing.assert_array_equal(assign_from_dual(LinearSimplex(c), v), assign_from_dual(LinearSimplex(lam * c), lam * v))


def test_objective_invariant_under_joint_shuffle(rng, random_instances):
    inst = random_instances[0]
    X = np.zeros((inst.n, inst.k))
    X[np.arange(inst.n) % 3 == 0, 0] = 1.0
    perm = rng.permutation(inst.n)
    assert objective(inst, X[perm], order=perm) == pytest.approx(objective(inst, X))


def test_concave_assign_monotone():
    for f in (ConcavePower(1.0, 0.5), ConcaveLog(2.0, 3.0)):
        vs = np.linspace(0, 3, 61)
        xs = [assign_from_dual(f, [v])[0] for v in vs]
        assert all(a >= b - 1e-15 for a, b in zip(xs, xs[1:]))


def test_objective_trivial_examples():
    one = Instance([1.0], (Item(LinearSimplex([4.0]), [[1.0]]),))
    assert objective(one, [[1.0]]) == 4.0
    assert objective(one, [[0.0]]) == 0.0
    two = Instance([1.0], (Item(LinearSimplex([1.0]), [[1.0]]), Item(LinearSimplex([1.0]), [[1.0]])))
    assert objective(two, [[1.0], [1.0]]) is INFEASIBLE


def test_gamma_examples():
    one = Instance([1.0], (Item(LinearSimplex([4.0]), [[0.5]]),))
    assert gamma_of_instance(one, 4.0).gamma == 1.0
    zero = Instance([1.0], (Item(LinearSimplex([2.0]), [[0.0]]),))
    g = gamma_of_instance(zero, 4.0)
    assert g.bid == 0.0 and g.gamma == 0.5
    with pytest.raises(ValueError):
        gamma_of_instance(one, 0.0)
