import numpy as np
import pytest
from scipy.optimize import linprog

from algorithms.simplex import (LinearProgram, LPModel, LPStatus, _StandardForm, _Tableau, farkas_violation,
                               lp_residuals, solve_lp)


def build_production_lp():
    # max 3x + 2y  s.t.  x + y <= 4,  x + 3y <= 8,  x <= 3
    return LinearProgram([3.0, 2.0], [[1, 1], [1, 3]], ("<=", "<="), [4.0, 8.0],
                         upper=[3.0, np.inf], sense="max")


def build_random_lp(rng, rows, cols):
    A = rng.normal(size=(rows, cols))
    b = rng.normal(size=rows)
    relations = tuple(rng.choice(["<=", ">=", "="], size=rows, p=[0.45, 0.45, 0.1]))
    c = rng.normal(size=cols)
    lower = np.where(rng.random(cols) < 0.2, -5.0, 0.0)
    return LinearProgram(c, A, relations, b, lower, np.full(cols, 5.0))


def reference(lp):
    upper = [r for r, rel in enumerate(lp.relations) if rel != "="]
    equal = [r for r, rel in enumerate(lp.relations) if rel == "="]
    flip = np.array([1.0 if lp.relations[r] == "<=" else -1.0 for r in upper])
    res = linprog(lp.c if lp.sense == "min" else -lp.c,
                  A_ub=lp.A[upper] * flip[:, None] if upper else None,
                  b_ub=lp.b[upper] * flip if upper else None,
                  A_eq=lp.A[equal] if equal else None, b_eq=lp.b[equal] if equal else None,
                  bounds=list(zip(lp.lower, lp.upper)), method="highs")
    return res


def test_small_maximization():
    result = solve_lp(build_production_lp())
    assert result.status is LPStatus.OPTIMAL
    assert result.value == pytest.approx(11.0)
    assert result.x == pytest.approx([3.0, 1.0])


def test_duals_are_sensitivities():
    lp = build_production_lp()
    result = solve_lp(lp)
    # Only x + y <= 4 binds besides the bound on x; relaxing it by one unit gains 2
    assert result.duals == pytest.approx([2.0, 0.0])
    bumped = LinearProgram(lp.c, lp.A, lp.relations, lp.b + [0.01, 0.0], lp.lower, lp.upper, "max")
    assert solve_lp(bumped).value - result.value == pytest.approx(0.01 * result.duals[0])


def test_strong_duality_in_canonical_form():
    rng = np.random.Generator(np.random.Philox(5))
    for _ in range(10):
        A = rng.random((4, 6))
        b = rng.random(4) + 0.5
        c = rng.random(6)
        lp = LinearProgram(c, A, ("<=",) * 4, b, sense="max")
        result = solve_lp(lp)
        assert result.optimal
        assert np.all(result.duals >= -1e-9)
        assert float(b @ result.duals) == pytest.approx(result.value, abs=1e-8)


def test_infeasible_lp_has_certificate():
    lp = LinearProgram([1.0, 1.0], [[1, 1], [1, 1]], (">=", "<="), [3.0, 1.0])
    result = solve_lp(lp)
    assert result.status is LPStatus.INFEASIBLE
    assert farkas_violation(lp, result.certificate) > 0


def test_unbounded_lp_has_ray():
    lp = LinearProgram([1.0, -1.0], [[1, -1]], (">=",), [1.0], sense="max")
    result = solve_lp(lp)
    assert result.status is LPStatus.UNBOUNDED
    assert lp.c @ result.ray > 0
    assert np.all(result.ray >= -1e-12)
    assert lp.A[0] @ result.ray >= -1e-12


def test_free_variables_and_equalities():
    # min x  s.t.  x - y = -2,  y <= 1, x free
    lp = LinearProgram([1.0, 0.0], [[1, -1], [0, 1]], ("=", "<="), [-2.0, 1.0],
                       lower=[-np.inf, 0.0])
    result = solve_lp(lp)
    assert result.value == pytest.approx(-2.0)
    assert lp_residuals(lp, result.x) <= 1e-9


def test_redundant_equalities():
    lp = LinearProgram([1.0, 2.0], [[1, 1], [2, 2]], ("=", "="), [1.0, 2.0])
    result = solve_lp(lp)
    assert result.value == pytest.approx(1.0)


def test_agrees_with_highs_reference():
    rng = np.random.Generator(np.random.Philox(2024))
    for _ in range(60):
        lp = build_random_lp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        ours = solve_lp(lp)
        ref = reference(lp)
        if ref.status == 2:
            assert ours.status is LPStatus.INFEASIBLE
            assert farkas_violation(lp, ours.certificate) > 0
        else:
            assert ref.status == 0
            assert ours.optimal
            assert ours.value == pytest.approx(ref.fun, abs=1e-6)
            assert lp_residuals(lp, ours.x) <= 1e-7


def test_highs_backend_matches():
    lp = build_production_lp()
    ours, theirs = solve_lp(lp), solve_lp(lp, backend="highs")
    assert theirs.value == pytest.approx(ours.value)
    assert theirs.duals == pytest.approx(ours.duals, abs=1e-8)


def test_model_builder_keys():
    model = LPModel("max")
    model.var("a", cost=1.0)
    model.var(("b", 1), upper=2.0, cost=1.0)
    model.add_row({"a": 1.0, ("b", 1): 1.0}, "<=", 3.0, tag="cap")
    model.add_cost("a", 1.0)
    lp = model.build()
    result = solve_lp(lp)
    assert result.value == pytest.approx(6.0)
    assert model.values(result.x) == pytest.approx({"a": 3.0, ("b", 1): 0.0})
    with pytest.raises(ValueError, match="duplicate"):
        model.var("a")


def test_invalid_programs():
    with pytest.raises(ValueError, match="Unknown row relations"):
        LinearProgram([1.0], [[1.0]], ("<",), [1.0])
    with pytest.raises(ValueError, match="dimension mismatch"):
        LinearProgram([1.0], [[1.0]], ("<=", "<="), [1.0])
    with pytest.raises(ValueError, match="Unknown LP backend"):
        solve_lp(build_production_lp(), backend="glpk")


def build_assignment_lp(costs):
    # Rows and columns of x sum to one; the system has one redundant equality and every vertex is degenerate
    size = len(costs)
    A = np.zeros((2 * size, size * size))
    for i in range(size):
        A[i, i * size:(i + 1) * size] = 1.0
        A[size + i, i::size] = 1.0
    return LinearProgram(np.ravel(costs), A, ("=",) * (2 * size), np.ones(2 * size))


def test_degenerate_assignment_programs():
    rng = np.random.Generator(np.random.Philox(8))
    for size in range(2, 7):
        for _ in range(4):
            costs = rng.integers(0, 4, size=(size, size)).astype(float)
            lp = build_assignment_lp(costs)
            ours = solve_lp(lp)
            ref = reference(lp)
            assert ours.optimal
            assert ours.value == pytest.approx(ref.fun, abs=1e-6), size
            assert lp_residuals(lp, ours.x) <= 1e-7


def test_long_runs_are_refactorized():
    rng = np.random.Generator(np.random.Philox(77))
    for _ in range(3):
        A = rng.random((40, 60))
        b = 1.0 + rng.random(40)
        c = 1.0 + rng.random(60)
        lp = LinearProgram(c, A, (">=",) * 40, b)
        ours = solve_lp(lp)
        assert ours.optimal
        assert ours.value == pytest.approx(reference(lp).fun, abs=1e-6)
        assert ours.stats["refactorizations"] >= max(1, ours.iterations // 50)


def test_refactor_reproduces_the_updated_tableau():
    rng = np.random.Generator(np.random.Philox(3))
    lp = LinearProgram(rng.random(5), rng.random((4, 5)), (">=",) * 4, 1.0 + rng.random(4))
    tab = _Tableau(_StandardForm(lp))
    for r, j in enumerate([0, 2, 4]):
        tab.pivot(r, j)
    T, rhs = tab.T.copy(), tab.rhs.copy()
    tab.refactor()
    assert tab.refactorizations == 1
    assert tab.T == pytest.approx(T, abs=1e-9)
    assert tab.rhs == pytest.approx(np.maximum(rhs, 0.0), abs=1e-9)


def test_ratio_test_prefers_large_pivots():
    lp = LinearProgram([1.0], [[1.0], [1.0]], (">=", ">="), [1.0, 1.0])
    tab = _Tableau(_StandardForm(lp))
    tab.rhs = np.array([1.0, 4.0 + 1e-10])
    # Ratios 2 and 2 + 5e-11 tie within the tolerance; the larger entry leaves
    assert tab.leaving_row(np.array([0.5, 2.0])) == 1
    assert tab.leaving_row(np.array([1e-12, -1.0])) is None
    tab.bland = True
    assert tab.leaving_row(np.array([0.5, 2.0])) == 0
