import numpy as np
import pytest
from scipy.optimize import linprog

from algorithms.ellipsoid import Cut, ellipsoid_feasibility, halfspace_oracle, iteration_budget
from algorithms.simplex import LinearProgram, solve_lp
from contract.errors import IndeterminateError


def build_box(dim, half_width, center=0.0):
    cuts = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        cuts.append(Cut(e, center + half_width, tag=("upper", k)))
        cuts.append(Cut(-e, -(center - half_width), tag=("lower", k)))
    return cuts


def test_finds_point_in_offset_box():
    cuts = build_box(3, 0.1, center=2.0)
    result = ellipsoid_feasibility(3, 10.0, halfspace_oracle(cuts), tol=1e-3)
    assert result.feasible
    assert all(cut.violation(result.point) <= 0 for cut in cuts)
    assert len(result.history) == result.iterations


def test_contradictory_halfspaces_are_empty():
    cuts = [Cut(np.array([1.0, 0.0]), -1.0), Cut(np.array([-1.0, 0.0]), -1.0)]
    result = ellipsoid_feasibility(2, 5.0, halfspace_oracle(cuts), tol=1e-4)
    assert not result.feasible
    assert result.point is None
    assert result.iterations == iteration_budget(2, 5.0, 1e-4)
    assert all(cut.margin > 0 for cut in result.history)


def test_one_dimensional_search():
    result = ellipsoid_feasibility(1, 4.0, halfspace_oracle(build_box(1, 0.01, center=-3.0)), tol=1e-3)
    assert result.feasible
    assert result.point[0] == pytest.approx(-3.0, abs=0.01)


def test_oracle_reports_most_violated_cut():
    cuts = build_box(2, 1.0)
    oracle = halfspace_oracle(cuts, tol=0.5)
    assert oracle(np.array([1.2, 0.0])) is None
    cut = oracle(np.array([0.0, -4.0]))
    assert cut.tag == ("lower", 1)
    assert cut.margin == pytest.approx(3.0)


def test_iteration_cap_is_indeterminate():
    cuts = [Cut(np.array([1.0, 1.0]), -1.0), Cut(np.array([-1.0, -1.0]), -1.0)]
    with pytest.raises(IndeterminateError, match="volume budget") as info:
        ellipsoid_feasibility(2, 5.0, halfspace_oracle(cuts), max_iters=3, tol=1e-6)
    assert len(info.value.best) == 3


def test_iteration_budget_formula():
    assert iteration_budget(2, np.e, 1.0) == 8
    assert iteration_budget(3, 1.0, 1.0) == 1


def test_invalid_arguments():
    with pytest.raises(ValueError, match="dimension"):
        ellipsoid_feasibility(0, 1.0, halfspace_oracle([]))
    with pytest.raises(ValueError, match="positive"):
        ellipsoid_feasibility(2, -1.0, halfspace_oracle([]))


def test_agrees_with_simplex_on_random_polytopes():
    rng = np.random.Generator(np.random.Philox(17))
    for trial in range(20):
        dim = int(rng.integers(2, 4))
        normals = rng.normal(size=(4, dim))
        inner = rng.uniform(-0.5, 0.5, size=dim)
        rhs = normals @ inner + 0.5
        if trial % 2:
            # A contradicting pair a·x <= -1 and -a·x <= -1
            a = rng.normal(size=dim)
            normals = np.vstack([normals, a, -a])
            rhs = np.concatenate([rhs, [-1.0, -1.0]])
        cuts = [Cut(n, float(r)) for n, r in zip(normals, rhs)]
        result = ellipsoid_feasibility(dim, 10.0, halfspace_oracle(cuts), tol=1e-3)
        lp = LinearProgram(np.zeros(dim), normals, ("<=",) * len(rhs), rhs,
                           lower=np.full(dim, -np.inf), upper=np.full(dim, np.inf))
        assert result.feasible == solve_lp(lp).optimal


def build_polytope(rng, empty):
    dim = int(rng.integers(2, 4))
    normals = rng.normal(size=(4, dim))
    inner = rng.uniform(-0.5, 0.5, size=dim)
    rhs = normals @ inner + 0.5
    if empty:
        # A contradicting pair a·x <= -1 and -a·x <= -1
        a = rng.normal(size=dim)
        normals = np.vstack([normals, a, -a])
        rhs = np.concatenate([rhs, [-1.0, -1.0]])
    return dim, normals, rhs


@pytest.mark.slow
def test_verdicts_and_optima_on_many_polytopes():
    rng = np.random.Generator(np.random.Philox(31))
    for trial in range(200):
        dim, normals, rhs = build_polytope(rng, empty=trial % 3 == 0)
        cuts = [Cut(n, float(r)) for n, r in zip(normals, rhs)]
        result = ellipsoid_feasibility(dim, 10.0, halfspace_oracle(cuts), tol=1e-3)
        c = rng.normal(size=dim)
        lp = LinearProgram(c, normals, ("<=",) * len(rhs), rhs,
                           lower=np.full(dim, -5.0), upper=np.full(dim, 5.0), sense="max")
        ours = solve_lp(lp)
        assert result.feasible == ours.optimal, trial
        if result.feasible:
            assert np.all(normals @ result.point <= rhs + 1e-9), trial
            ref = linprog(-c, A_ub=normals, b_ub=rhs, bounds=[(-5.0, 5.0)] * dim, method="highs")
            assert ref.status == 0, trial
            assert ours.value == pytest.approx(-ref.fun, abs=1e-6), trial
