"""Exact simplex solver: known optima, certificates, and a float oracle."""
from __future__ import annotations

import random

import pytest

from amhedge.lp import LinearProgram, format_lp, max_slack, solve
from amhedge.rationals import ONE, Q, ZERO


def test_two_variable_max():
    # max x + y, x + 2y <= 4, 3x + y <= 6 -> x = 8/5, y = 6/5
    lp = LinearProgram()
    x = lp.add_var("x")
    y = lp.add_var("y")
    lp.add_constraint({x: ONE, y: Q(2)}, "<=", Q(4))
    lp.add_constraint({x: Q(3), y: ONE}, "<=", Q(6))
    lp.set_objective("max", {x: ONE, y: ONE})
    out = solve(lp)
    assert out.status == "optimal"
    assert out.value == Q(14, 5)
    assert out.x(x) == Q(8, 5) and out.x(y) == Q(6, 5)


def test_min_with_equalities():
    # min 2x + 3y, x + y = 1, y - x >= 1/3 -> the >= row binds: y = 2/3
    lp = LinearProgram()
    x = lp.add_var("x")
    y = lp.add_var("y")
    lp.add_constraint({x: ONE, y: ONE}, "=", ONE)
    lp.add_constraint({y: ONE, x: -ONE}, ">=", Q(1, 3))
    lp.set_objective("min", {x: Q(2), y: Q(3)})
    out = solve(lp)
    assert out.status == "optimal"
    assert out.value == Q(8, 3)
    assert (out.x(x), out.x(y)) == (Q(1, 3), Q(2, 3))


def test_free_variable():
    # x unrestricted: min x s.t. x >= -5/7 attains the negative bound
    lp = LinearProgram()
    x = lp.add_var("x", nonneg=False)
    lp.add_constraint({x: ONE}, ">=", Q(-5, 7))
    lp.set_objective("min", {x: ONE})
    out = solve(lp)
    assert out.status == "optimal"
    assert out.value == Q(-5, 7)


def test_infeasible():
    lp = LinearProgram()
    x = lp.add_var("x")
    lp.add_constraint({x: ONE}, ">=", ONE)
    lp.add_constraint({x: ONE}, "<=", ZERO)
    lp.set_objective("max", {x: ONE})
    out = solve(lp)
    assert out.status == "infeasible"


def test_unbounded_reports_ray():
    lp = LinearProgram()
    x = lp.add_var("x")
    y = lp.add_var("y")
    lp.add_constraint({x: ONE, y: -ONE}, "<=", ONE)
    lp.set_objective("max", {x: ONE})
    out = solve(lp)
    assert out.status == "unbounded"
    assert out.ray is not None and any(out.ray)


def test_degenerate_vertex():
    # three rows active at the optimum (1/3, 1/3); Bland must not cycle
    lp = LinearProgram()
    x = lp.add_var("x")
    y = lp.add_var("y")
    lp.add_constraint({x: Q(2), y: ONE}, "<=", ONE)
    lp.add_constraint({x: ONE, y: Q(2)}, "<=", ONE)
    lp.add_constraint({x: ONE}, "<=", Q(1, 3))
    lp.set_objective("max", {x: ONE, y: ONE})
    out = solve(lp)
    assert out.status == "optimal"
    assert out.value == Q(2, 3)
    assert (out.x(x), out.x(y)) == (Q(1, 3), Q(1, 3))


def test_exact_rationals_no_drift():
    # denominators compound; the optimum must stay exact
    lp = LinearProgram()
    x = lp.add_var("x")
    y = lp.add_var("y")
    lp.add_constraint({x: Q(1, 3), y: Q(1, 7)}, "<=", Q(1, 11))
    lp.add_constraint({x: Q(1, 5), y: Q(1, 2)}, "<=", Q(1, 13))
    lp.set_objective("max", {x: ONE, y: ONE})
    out = solve(lp)
    assert out.status == "optimal"
    # vertex of the two rows: solve the 2x2 system exactly
    a, b, c = Q(1, 3), Q(1, 7), Q(1, 11)
    d, e, f = Q(1, 5), Q(1, 2), Q(1, 13)
    det = a * e - b * d
    xv = (c * e - b * f) / det
    yv = (a * f - c * d) / det
    assert out.value == xv + yv


def test_copy_is_independent():
    lp = LinearProgram()
    x = lp.add_var("x")
    lp.add_constraint({x: ONE}, "<=", ONE)
    lp.set_objective("max", {x: ONE})
    lp2 = lp.copy()
    lp2.add_constraint({x: ONE}, "<=", Q(1, 2))
    assert solve(lp).value == ONE
    assert solve(lp2).value == Q(1, 2)
    assert format_lp(lp) != format_lp(lp2)


def test_max_slack_simplex_center():
    # mass 1 split over two coordinates: best uniform slack is 1/2
    lp = LinearProgram()
    x = lp.add_var("x")
    y = lp.add_var("y")
    lp.add_constraint({x: ONE, y: ONE}, "=", ONE)
    r1 = lp.add_constraint({x: ONE}, ">=", ZERO)
    r2 = lp.add_constraint({y: ONE}, ">=", ZERO)
    out = max_slack(lp, [r1, r2])
    assert out.status == "optimal" and out.strict
    assert out.slack == Q(1, 2)
    assert out.witness[:2] == [Q(1, 2), Q(1, 2)]


def test_max_slack_negative_when_tight():
    # x <= 1/3 and x >= 1/2 only coexist with slack -1/12
    lp = LinearProgram()
    x = lp.add_var("x")
    r1 = lp.add_constraint({x: ONE}, "<=", Q(1, 3))
    r2 = lp.add_constraint({x: ONE}, ">=", Q(1, 2))
    out = max_slack(lp, [r1, r2])
    assert out.status == "optimal" and not out.strict
    assert out.slack == Q(-1, 12)


def test_max_slack_rejects_equalities():
    lp = LinearProgram()
    x = lp.add_var("x")
    r = lp.add_constraint({x: ONE}, "=", ONE)
    with pytest.raises(ValueError):
        max_slack(lp, [r])


def _random_lp(rng: random.Random):
    """Bounded-feasible random LP: box plus random <= rows, random costs."""
    lp = LinearProgram()
    n = rng.randint(2, 4)
    xs = [lp.add_var(f"x{j}") for j in range(n)]
    for x in xs:
        lp.add_constraint({x: ONE}, "<=", Q(rng.randint(1, 5)))
    for _ in range(rng.randint(1, 3)):
        row = {x: Q(rng.randint(-3, 3), rng.randint(1, 4)) for x in xs}
        lp.add_constraint(row, "<=", Q(rng.randint(0, 6), rng.randint(1, 3)))
    lp.set_objective("max", {x: Q(rng.randint(-2, 4), rng.randint(1, 3)) for x in xs})
    return lp, xs


def test_against_float_solver():
    scipy_lin = pytest.importorskip("scipy.optimize")
    rng = random.Random(20260814)
    for _ in range(25):
        lp, xs = _random_lp(rng)
        out = solve(lp)
        assert out.status == "optimal"
        c = [0.0] * lp.num_vars
        for j, v in lp.objective.items():
            c[j] = -float(v)
        a_ub, b_ub = [], []
        a_eq, b_eq = [], []
        for row in lp.rows:
            dense = [0.0] * lp.num_vars
            for j, v in row.coeffs.items():
                dense[j] = float(v)
            if row.rel == "<=":
                a_ub.append(dense)
                b_ub.append(float(row.rhs))
            elif row.rel == ">=":
                a_ub.append([-v for v in dense])
                b_ub.append(-float(row.rhs))
            else:
                a_eq.append(dense)
                b_eq.append(float(row.rhs))
        res = scipy_lin.linprog(
            c, A_ub=a_ub or None, b_ub=b_ub or None,
            A_eq=a_eq or None, b_eq=b_eq or None, method="highs",
        )
        assert res.status == 0
        assert abs(float(out.value) - (-res.fun)) < 1e-9
