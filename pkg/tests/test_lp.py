import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelfree import lp
from modelfree.lp import Bound, LpProblem, Rel, Sense, Status, solve

from oracles import vertex_enumeration


def P(sense, c, A, rel, b, bounds=None):
    return LpProblem(sense, np.asarray(c, float), np.asarray(A, float), rel, np.asarray(b, float), bounds)


def test_min_single_bound():
    s = solve(P("min", [1], [[1]], [">="], [1]))
    assert s.status is Status.OPTIMAL
    assert s.value == pytest.approx(1)
    assert s.x == pytest.approx([1])


def test_max_two_vars():
    s = solve(P("max", [1, 1], [[1, 1], [1, 0]], ["<=", "<="], [2, 1]))
    assert s.value == pytest.approx(2)
    # a vertex of {(0,2),(1,1),(1,0),(0,0)} attaining 2
    assert any(np.allclose(s.x, v) for v in ([0, 2], [1, 1]))


def test_infeasible():
    assert solve(P("min", [0], [[1]], ["<="], [-1])).status is Status.INFEASIBLE


def test_unbounded():
    assert solve(P("max", [1, 0], [[1, -1]], ["<="], [1])).status is Status.UNBOUNDED


def test_free_variable():
    # min |shifted| style: min x s.t. x >= -3, x free
    s = solve(P("min", [1], [[1]], [">="], [-3], [Bound.FREE]))
    assert s.value == pytest.approx(-3)


def test_equality_and_redundant_rows():
    A = [[1, 1, 1], [1, 1, 1], [1, -1, 0]]
    s = solve(P("min", [1, 2, 3], A, ["==", "==", "=="], [1, 1, 0]))
    assert s.optimal
    assert s.value == pytest.approx(1.5)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        P("min", [1, 2], [[1]], ["<="], [1])
    with pytest.raises(ValueError):
        P("min", [1], [[1]], ["<=", "<="], [1])


def test_dual_values_match_sensitivity():
    prob = P("max", [3, 5], [[1, 0], [0, 2], [3, 2]], ["<=", "<=", "<="], [4, 12, 18])
    s = solve(prob, method="primal")
    assert s.value == pytest.approx(36)
    assert s.duals == pytest.approx([0, 1.5, 1])


def test_degenerate_cycling_example():
    # Beale's classic cycling instance
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    s = solve(P("min", c, A, ["<=", "<=", "<="], [0, 0, 1]))
    assert s.value == pytest.approx(-0.05)


def _random_lp(rng, m, n):
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    b = rng.integers(-3, 10, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    rel = [str(v) for v in rng.choice(["<=", ">=", "=="], size=m, p=[0.5, 0.3, 0.2])]
    bounds = [Bound(v) for v in rng.choice([Bound.NONNEG.value, Bound.FREE.value], size=n, p=[0.8, 0.2])]
    return P(str(rng.choice(["min", "max"])), c, A, rel, b, bounds)


def _hand_dual(prob):
    """Textbook dual for a min problem with <=, >=, == rows and nonneg/free vars."""
    sign = 1.0 if prob.sense == Sense.MIN else -1.0
    c = sign * prob.c
    m, n = prob.A.shape
    # min c x, rows a_i x (rel) b_i  ->  max b y, A^T y (<= or ==) c, y sign per row
    ybounds = []
    for r in prob.rel:
        ybounds.append({Rel.GE: "nonneg", Rel.LE: "nonpos", Rel.EQ: "free"}[Rel(r)])
    # substitute y = -y' for nonpos rows so all are nonneg or free
    flip = np.array([-1.0 if t == "nonpos" else 1.0 for t in ybounds])
    AT = (prob.A * flip[:, None]).T
    rel = [Rel.LE if bd == Bound.NONNEG else Rel.EQ for bd in prob.bounds]
    dual = P("max", prob.b * flip, AT, rel, c, [Bound.FREE if t == "free" else Bound.NONNEG for t in ybounds])
    return dual, sign


def test_weak_duality_random_small():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(300):
        prob = _random_lp(rng, rng.integers(1, 7), rng.integers(1, 7))
        s = solve(prob)
        dual, sign = _hand_dual(prob)
        d = solve(dual)
        if s.optimal and d.optimal:
            assert sign * s.value == pytest.approx(d.value, abs=1e-7)
            checked += 1
        elif s.status is Status.UNBOUNDED:
            assert d.status is Status.INFEASIBLE
    assert checked > 50


def test_vertex_property_and_feasibility():
    rng = np.random.default_rng(11)
    for _ in range(200):
        prob = _random_lp(rng, rng.integers(1, 7), rng.integers(1, 7))
        prob = LpProblem(prob.sense, prob.c, prob.A, prob.rel, prob.b, [Bound.NONNEG] * prob.A.shape[1])
        s = solve(prob)
        if not s.optimal:
            continue
        assert lp.max_violation(prob, s.x) <= 1e-7
        Ax = prob.A @ s.x
        scale = np.maximum(1.0, np.abs(prob.A).max(axis=1))
        active_rows = np.sum(np.abs(Ax - prob.b) <= 1e-9 * scale)
        active_bounds = np.sum(np.abs(s.x) <= 1e-9)
        assert active_rows + active_bounds >= prob.A.shape[1]


def test_equality_form_matches_vertex_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(60):
        m, n = rng.integers(1, 4), rng.integers(2, 6)
        A = rng.integers(-3, 4, size=(m, n)).astype(float)
        x0 = rng.uniform(0, 2, size=n) * (rng.uniform(size=n) < 0.7)
        b = A @ x0
        A = np.vstack([A, np.ones(n)])  # keep the polytope bounded
        b = np.append(b, x0.sum() + 1.0)
        A = np.hstack([A, np.vstack([np.zeros((m, 1)), [[1.0]]])])
        c = rng.normal(size=n + 1)
        ref = vertex_enumeration(A, b, c)
        lo = solve(P("min", c, A, ["=="] * (m + 1), b))
        hi = solve(P("max", c, A, ["=="] * (m + 1), b))
        assert lo.value == pytest.approx(ref[0], abs=1e-7)
        assert hi.value == pytest.approx(ref[1], abs=1e-7)


def test_dual_route_agrees_with_primal():
    rng = np.random.default_rng(8)
    for _ in range(40):
        n = rng.integers(2, 5)
        m = 4 * n + 3
        A = rng.normal(size=(m, n))
        b = A @ rng.normal(size=n) - rng.uniform(0, 1, size=m)
        prob = P("min", rng.normal(size=n), A, ["<="] * m, b, [Bound.FREE] * n)
        p = solve(prob, method="primal")
        d = solve(prob, method="dual")
        assert p.status == d.status
        if p.optimal:
            assert d.value == pytest.approx(p.value, abs=1e-7)
            assert lp.max_violation(prob, d.x) <= 1e-7


def test_determinism_bitwise():
    rng = np.random.default_rng(1)
    prob = _random_lp(rng, 6, 6)
    a, b = solve(prob), solve(prob)
    assert a.status == b.status
    if a.optimal:
        assert np.array_equal(a.x, b.x)


def test_tableau_dump(tmp_path):
    path = tmp_path / "t.csv"
    solve(P("max", [1, 1], [[1, 1], [1, 0]], ["<=", "<="], [2, 1]), method="primal", dump_tableau=str(path))
    lines = path.read_text().splitlines()
    assert len(lines) >= 3


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=5), st.floats(0.5, 10))
def test_simplex_box_closed_form(c, r):
    # min c.x over the simplex sum x <= r, x >= 0: value min(0, r * min c)
    n = len(c)
    s = solve(P("min", c, [np.ones(n)], ["<="], [r]))
    assert s.value == pytest.approx(min(0.0, r * min(c)), abs=1e-9)
