import math

import numpy as np
import pytest
import scipy.sparse as sp

from conicoa.bench import ball_unlifted, brute_force, random_instance
from conicoa.cones import ConeProduct, ConeSpec, dual_member, project
from conicoa.conic_solver import Status, solve_conic
from conicoa.oa import (ConicProblem, OaState, OaStatus, assert_no_repeat, format_record,
                        initialize_cuts, parse_record, run)


def sqrt_half_problem():
    # min t  s.t.  (t, x1 - 1/2, x2 - 1/2) in SOC_3,  x in {0, 1}^2
    A_z = sp.identity(3, format="csr")[1:]
    A_x = -sp.identity(2, format="csr")
    return ConicProblem([1.0, 0, 0], A_x, A_z, [-0.5, -0.5], [0, 0], [1, 1],
                        ConeProduct((ConeSpec.soc(3),)))


def linear_problem():
    # min z  s.t.  z = x,  x in {0..3},  z >= 0
    return ConicProblem([1.0], [[-1.0]], [[1.0]], [0.0], [0], [3], ConeProduct((ConeSpec.nonneg(1),)))


@pytest.fixture(scope="module")
def random_runs():
    """(problem, outcome, state, brute-force optimum, per-assignment values)."""
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(20):
        p = random_instance(rng, max_assignments=48)
        st = OaState()
        res = run(p, state=st)
        best, _, values = brute_force(p)
        out.append((p, res, st, best, values))
    return out


# examples ---------------------------------------------------------------

def test_sqrt_half_example():
    st = OaState()
    res = run(sqrt_half_problem(), state=st)
    assert res.status is OaStatus.OPTIMAL
    assert res.objective == pytest.approx(math.sqrt(0.5), abs=1e-5)
    assert res.iterations <= 4
    # each iteration visited a new assignment
    assert len(st.visited) == res.iterations


def test_linear_example():
    res = run(linear_problem())
    assert res.status is OaStatus.OPTIMAL
    assert res.objective == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(res.x, [0])
    assert res.iterations == 1


def test_ball_lattice_n2_infeasible():
    res = run(ball_unlifted(2))
    assert res.status is OaStatus.INFEASIBLE
    assert res.objective is None


def test_aggregated_cuts_reach_same_optimum():
    res = run(sqrt_half_problem(), aggregate=True)
    assert res.status is OaStatus.OPTIMAL
    assert res.objective == pytest.approx(math.sqrt(0.5), abs=1e-5)


def test_eps_must_be_positive():
    with pytest.raises(ValueError):
        run(linear_problem(), eps=0.0)


def test_iteration_limit_keeps_valid_bounds():
    res = run(sqrt_half_problem(), max_iters=1)
    assert res.status in (OaStatus.ITERATION_LIMIT, OaStatus.OPTIMAL)
    lo, hi = res.bounds
    assert lo <= math.sqrt(0.5) + 1e-6 <= hi + 2e-6


def test_problem_validation():
    with pytest.raises(ValueError):
        ConicProblem([1.0], [[-1.0]], [[1.0]], [0.0], [0], [np.inf], ConeProduct((ConeSpec.nonneg(1),)))
    with pytest.raises(ValueError):
        ConicProblem([1.0], [[-1.0]], [[1.0]], [0.0], [2], [1], ConeProduct((ConeSpec.nonneg(1),)))


# initialization ---------------------------------------------------------

def test_initialize_one_cut_per_factor():
    p = sqrt_half_problem()
    pool, cert = initialize_cuts(p)
    assert cert.status is Status.OPTIMAL
    assert len(pool) == len(p.cone)
    for k, cut in pool:
        assert dual_member(p.cone.factors[k], cut.beta)


def test_initialize_fallback_on_nonneg():
    # z = -1 has no solution, so the relaxation cannot supply a cut
    p = ConicProblem([1.0], [[0.0]], [[1.0]], [-1.0], [0], [1], ConeProduct((ConeSpec.nonneg(1),)))
    pool, cert = initialize_cuts(p)
    assert cert.status is Status.INFEASIBLE
    (k, cut), = list(pool)
    assert k == 0 and np.allclose(cut.beta, [1.0])


def test_initialize_stores_relaxation_dual():
    # with no rows on z the relaxation dual of the SOC block is c itself
    beta = np.array([1.0, -0.6, -0.8])
    p = ConicProblem(beta, [[1.0]], np.zeros((1, 3)), [0.0], [0], [1], ConeProduct((ConeSpec.soc(3),)))
    pool, cert = initialize_cuts(p)
    assert cert.status is Status.OPTIMAL
    (k, cut), = list(pool)
    assert k == 0
    assert dual_member(ConeSpec.soc(3), cut.beta)
    # cuts are stored at unit length
    assert np.allclose(cut.beta, beta / np.linalg.norm(beta), atol=1e-6)


# no repeat --------------------------------------------------------------

def test_assert_no_repeat():
    st = OaState()
    assert assert_no_repeat(st, [0, 0])
    assert assert_no_repeat(st, [0, 1])
    assert not assert_no_repeat(st, [0, 0])


# properties over random instances --------------------------------------

def test_outcome_matches_enumeration(random_runs):
    for p, res, st, best, _ in random_runs:
        if math.isinf(best):
            assert res.status is OaStatus.INFEASIBLE
        else:
            assert res.status is OaStatus.OPTIMAL
            assert res.objective == pytest.approx(best, abs=1e-5)
    statuses = {res.status for _, res, *_ in random_runs}
    assert OaStatus.OPTIMAL in statuses


def test_bound_sandwich(random_runs):
    for p, res, st, best, _ in random_runs:
        iters = [r for r in res.log if "iter" in r]
        lows = [r["z_L"] for r in iters]
        highs = [r["z_U"] for r in iters]
        assert all(b >= a for a, b in zip(lows, lows[1:]))
        assert all(b <= a for a, b in zip(highs, highs[1:]))
        if math.isfinite(best):
            for r in iters:
                assert r["z_L"] - 1e-6 <= best <= r["z_U"] + 1e-6


def feasible_points(p, values):
    """Cone parts of the subproblem optima, projected so they lie exactly in K."""
    pts = []
    for xs, v in values.items():
        if math.isinf(v):
            continue
        cert = solve_conic(p.subproblem(np.array(xs, float)))
        z = np.concatenate([project(f, cert.z[p.cone.block(i)]) for i, f in enumerate(p.cone.factors)])
        pts.append(z)
    return pts


def test_cut_validity(random_runs):
    checked = 0
    for p, res, st, best, values in random_runs:
        pts = feasible_points(p, values)
        for k, cut in st.pool:
            spec = p.cone.factors[k] if k >= 0 else None
            if spec is not None:
                assert dual_member(spec, cut.beta)
            for z in pts:
                assert cut.evaluate(z) >= -1e-8
                checked += 1
    assert checked >= 1000


def test_termination_within_assignment_count(random_runs):
    for p, res, st, best, _ in random_runs:
        assert res.status in (OaStatus.OPTIMAL, OaStatus.INFEASIBLE)
        assert res.iterations <= p.assignments()
        if res.status is OaStatus.OPTIMAL:
            assert res.bounds[1] - res.bounds[0] < 1e-5
        assert len(st.visited) == res.iterations


def test_incumbent_feasibility(random_runs):
    for p, res, *_ in random_runs:
        if res.status is OaStatus.OPTIMAL:
            assert p.is_feasible(res.x, res.z, 1e-6)
            assert p.c @ res.z == pytest.approx(res.objective, abs=1e-9)


# log records ------------------------------------------------------------

def test_records_round_trip(random_runs):
    for _, res, *_ in random_runs:
        for rec in res.log:
            assert parse_record(format_record(rec)) == rec


def test_record_fields():
    res = run(sqrt_half_problem())
    *iters, final = res.log
    for r in iters:
        assert set(r) == {"iter", "z_L", "z_U", "gap", "status", "cuts"}
    assert set(final) == {"final", "iterations", "z_L", "z_U", "gap", "cuts"}
    assert final["final"] == "optimal" and final["gap"] < 1e-5
    line = format_record(iters[0])
    assert line.startswith("iter=1 z_L=")
