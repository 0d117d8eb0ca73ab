import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conicoa.lp import LpStatus, solve_lp
from conicoa.milp import Cut, MilpProblem, MilpStatus, solve_milp


# LP ---------------------------------------------------------------------

def test_lp_single_row():
    r = solve_lp([-1, -1], A_ub=[[1, 1]], b_ub=[1.5], lo=[0, 0], hi=[1, 1])
    assert r.status is LpStatus.OPTIMAL
    assert -r.value == pytest.approx(1.5)


def test_lp_bound_conflict_is_infeasible():
    r = solve_lp([0.0], A_eq=[[1.0]], b_eq=[2.0], lo=[0.0], hi=[1.0])
    assert r.status is LpStatus.INFEASIBLE


def test_lp_unbounded_ray():
    r = solve_lp([-1.0], lo=[-np.inf], hi=[np.inf])
    assert r.status is LpStatus.UNBOUNDED
    assert r.ray is not None and r.ray[0] > 0


def random_lp(rng, m, n):
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    x0 = rng.uniform(0, 2, size=n)
    b = A @ x0 + rng.uniform(0, 1, size=m)
    c = rng.normal(size=n)
    return c, A, b


def test_lp_duality_and_complementary_slackness():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c, A, b = random_lp(rng, 5, 4)
        r = solve_lp(c, A_ub=A, b_ub=b, lo=np.zeros(4), hi=np.full(4, 3.0))
        assert r.status is LpStatus.OPTIMAL
        x, y, d = r.x, r.y, r.d
        assert np.all(A @ x <= b + 1e-9) and np.all(x >= -1e-9) and np.all(x <= 3 + 1e-9)
        assert np.allclose(c, A.T @ y + d, atol=1e-8)
        # complementary slackness on rows and on both column bounds
        assert np.all(np.abs(y * (b - A @ x)) <= 1e-8)
        assert np.all(np.abs(np.minimum(d, 0) * (3 - x)) <= 1e-8)
        assert np.all(np.abs(np.maximum(d, 0) * x) <= 1e-8)


def test_lp_matches_scipy_linprog():
    from scipy.optimize import linprog
    rng = np.random.default_rng(1)
    for _ in range(50):
        c, A, b = random_lp(rng, 6, 5)
        ours = solve_lp(c, A_ub=A, b_ub=b, lo=np.zeros(5), hi=np.full(5, 2.0))
        ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, 2)] * 5, method="highs")
        assert ours.value == pytest.approx(ref.fun, abs=1e-8)


def test_lp_degenerate_instance_terminates():
    # a classic cycling example for Dantzig's rule without anti-cycling
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    r = solve_lp(c, A_ub=A, b_ub=[0, 0, 1])
    assert r.status is LpStatus.OPTIMAL
    assert r.value == pytest.approx(-0.05)


# MILP -------------------------------------------------------------------

def test_milp_two_sided_row_example():
    # x1 + x2 <= 1.5 as a two-sided row through a slack z >= 0
    p = MilpProblem([-1, -1, 0], [[1, 1]], [[1]], [1.5], [0, 0], [1, 1], True, z_lower=[0.0])
    r = solve_milp(p)
    assert r.status is MilpStatus.OPTIMAL
    assert r.value == pytest.approx(-1.0)


def test_milp_feasibility_only():
    p = MilpProblem(np.zeros(3), [[1, 1, 1]], np.zeros((1, 0)), [2], [0, 0, 0], [1, 1, 1], True)
    r = solve_milp(p)
    assert r.status is MilpStatus.OPTIMAL
    assert r.x.sum() == pytest.approx(2) and np.allclose(r.x, np.round(r.x))


def test_milp_cut_reproduces_subproblem_value():
    # z2 = 1, min z1, cut (1, -1).z >= 0
    p = MilpProblem([0, 1, 0], [[0]], [[0, 1]], [1], [0], [1], True, cuts=[Cut(0, [1, -1])])
    r = solve_milp(p)
    assert r.status is MilpStatus.OPTIMAL
    assert r.z[0] == pytest.approx(1.0)
    assert r.value == pytest.approx(1.0)


def test_milp_rejects_bad_data():
    with pytest.raises(ValueError):
        MilpProblem([0], np.zeros((0, 1)), np.zeros((0, 0)), [], [0], [np.inf], True)
    with pytest.raises(ValueError):
        MilpProblem([0, 0], [[1]], [[1]], [1], [0], [1], True, cuts=[Cut(0, [1, 1])])


def test_milp_infeasible():
    p = MilpProblem([0, 0], [[2, 2]], np.zeros((1, 0)), [1], [0, 0], [1, 1], True)
    assert solve_milp(p).status is MilpStatus.INFEASIBLE


def test_node_limit_reports_bound():
    rng = np.random.default_rng(3)
    p = random_knapsack(rng, 12)
    r = solve_milp(p, node_limit=3)
    assert r.status is MilpStatus.NODE_LIMIT
    assert np.isfinite(r.bound)


def random_knapsack(rng, n, rows=3):
    """Pure binary problem with integer data: min c.x s.t. A x + s = b, s >= 0."""
    A = rng.integers(0, 6, size=(rows, n)).astype(float)
    b = np.floor(A.sum(axis=1) * rng.uniform(0.3, 0.7, size=rows))
    c = rng.integers(-9, 4, size=n).astype(float)
    return MilpProblem(np.concatenate([c, np.zeros(rows)]), A, np.eye(rows), b,
                       np.zeros(n), np.ones(n), True, z_lower=np.zeros(rows))


def enumerate_binary(p):
    best = np.inf
    for xs in itertools.product((0.0, 1.0), repeat=p.nx):
        x = np.array(xs)
        if np.all(p.A_x @ x <= p.b):
            best = min(best, float(p.c[:p.nx] @ x))
    return best


def test_branch_and_bound_matches_enumeration():
    rng = np.random.default_rng(4)
    for trial in range(40):
        p = random_knapsack(rng, int(rng.integers(4, 13)))
        r = solve_milp(p)
        ref = enumerate_binary(p)
        if np.isinf(ref):
            assert r.status is MilpStatus.INFEASIBLE
        else:
            assert r.status is MilpStatus.OPTIMAL
            # integer data: the optimum is an integer and must be hit exactly
            assert round(r.value, 6) == ref


def check_solution(p, r):
    assert np.all(r.x >= p.L - 1e-6) and np.all(r.x <= p.U + 1e-6)
    assert np.all(np.abs(r.x - np.round(r.x)) <= 1e-6)
    assert np.allclose(p.A_x @ r.x + p.A_z @ r.z, p.b, atol=1e-7)
    for cut in p.cuts:
        assert cut.evaluate(r.z) >= -1e-7


def mixed_problem(rng, n=4, nz=3):
    A_x = rng.integers(-2, 3, size=(2, n)).astype(float)
    A_z = rng.normal(size=(2, nz))
    b = rng.normal(size=2)
    c = np.concatenate([rng.normal(size=n), rng.uniform(0.1, 1, size=nz)])
    return MilpProblem(c, A_x, A_z, b, -np.ones(n), 2 * np.ones(n), True,
                       z_lower=-5 * np.ones(nz), z_upper=5 * np.ones(nz))


def test_cuts_never_decrease_value_and_solutions_stay_valid():
    rng = np.random.default_rng(5)
    tested = 0
    for _ in range(30):
        p = mixed_problem(rng)
        r = solve_milp(p)
        if r.status is not MilpStatus.OPTIMAL:
            continue
        check_solution(p, r)
        prev = r.value
        for _ in range(5):
            p.add_cut(Cut(0, rng.normal(size=p.nz)))
            r = solve_milp(p)
            if r.status is not MilpStatus.OPTIMAL:
                assert r.status is MilpStatus.INFEASIBLE
                break
            check_solution(p, r)
            assert r.value >= prev - 1e-9
            prev = r.value
        tested += 1
    assert tested >= 10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_returned_points_are_integral_and_in_bounds(seed):
    rng = np.random.default_rng(seed)
    p = mixed_problem(rng)
    r = solve_milp(p)
    if r.status is MilpStatus.OPTIMAL:
        check_solution(p, r)
