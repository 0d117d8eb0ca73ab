import itertools
import math
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from conicoa.bench import random_instance
from conicoa.cones import ConeProduct, ConeSpec, dual_member, member
from conicoa.conic_solver import (ContinuousConeProblem, SolveCertificate, Status, kkt_residuals,
                                  solve_conic)
from conicoa.io import parse_conic

DATA = Path(__file__).parent / "data"


def soc2_problem():
    # min z1  s.t.  z2 = 1,  (z1, z2) in SOC_2
    return ContinuousConeProblem([1.0, 0.0], sp.csr_matrix([[0.0, 1.0]]), [1.0],
                                 ConeProduct((ConeSpec.soc(2),)))


def exact_soc2_certificate():
    return SolveCertificate(Status.OPTIMAL, z=np.array([1.0, 1.0]), lam=np.array([1.0]),
                            beta=np.array([1.0, -1.0]), value=1.0)


def subproblems(n_instances=8, per_instance=6, seed=11):
    """Subproblems CP(x) of random mixed-integer instances at a few assignments."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_instances):
        p = random_instance(rng, max_assignments=64)
        boxes = list(itertools.product(*[range(int(lo), int(hi) + 1) for lo, hi in zip(p.L, p.U)]))
        picks = rng.choice(len(boxes), size=min(per_instance, len(boxes)), replace=False)
        out += [p.subproblem(np.array(boxes[i], float)) for i in picks]
    return out


@pytest.fixture(scope="module")
def solved():
    return [(q, solve_conic(q)) for q in subproblems()]


def check_invariants(q, cert, tol=1e-6):
    A = q.A
    if cert.status is Status.OPTIMAL:
        assert np.allclose(cert.beta, q.c - A.T @ cert.lam, atol=tol)
        gap = abs(q.c @ cert.z - cert.lam @ q.rhs)
        assert gap <= 1e-7 * (1 + abs(q.c @ cert.z)) + 1e-12
    elif cert.status is Status.INFEASIBLE:
        assert np.allclose(cert.beta, -(A.T @ cert.lam), atol=tol)
        assert cert.lam @ q.rhs > 0
    else:
        pytest.fail(f"unexpected status {cert.status}")
    for i, spec in enumerate(q.cone.factors):
        assert dual_member(spec, cert.beta[q.cone.block(i)], tol)


# examples ---------------------------------------------------------------

def test_soc2_example():
    q = soc2_problem()
    cert = solve_conic(q)
    assert cert.status is Status.OPTIMAL
    assert np.allclose(cert.z, [1, 1], atol=1e-6)
    assert cert.value == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(cert.lam, [1.0], atol=1e-6)
    assert np.allclose(cert.beta, [1.0, -1.0], atol=1e-6)
    assert max(cert.residuals) <= 1e-7


def test_sign_conflict_is_infeasible():
    q = ContinuousConeProblem([1.0], sp.csr_matrix([[1.0]]), [-1.0], ConeProduct((ConeSpec.nonneg(1),)))
    cert = solve_conic(q)
    assert cert.status is Status.INFEASIBLE
    assert np.allclose(cert.lam, [-1.0], atol=1e-6)
    assert np.allclose(cert.beta, [1.0], atol=1e-6)
    assert cert.lam @ q.rhs == pytest.approx(1.0)


def test_exp_example():
    q = ContinuousConeProblem([0, 0, 1.0], sp.csr_matrix([[1.0, 0, 0], [0, 1.0, 0]]), [1.0, 1.0],
                              ConeProduct((ConeSpec.exp(),)))
    cert = solve_conic(q)
    assert cert.status is Status.OPTIMAL
    assert cert.value == pytest.approx(math.e, abs=1e-5)
    check_invariants(q, cert)


def test_unbounded_problem():
    # min -z1 over the nonnegative orthant with no rows
    q = ContinuousConeProblem([-1.0, 0.0], sp.csr_matrix((1, 2)), [0.0], ConeProduct((ConeSpec.nonneg(2),)))
    cert = solve_conic(q)
    assert cert.status is Status.UNBOUNDED
    assert cert.z is not None and q.c @ cert.z < 0


def test_iteration_cap_gives_failure_status():
    q = ContinuousConeProblem([0, 0, 1.0], sp.csr_matrix([[1.0, 0, 0], [0, 1.0, 0]]), [1.0, 1.0],
                              ConeProduct((ConeSpec.exp(),)))
    cert = solve_conic(q, max_iters=5)
    assert cert.status is Status.NUMERICAL_FAILURE


def test_shape_validation():
    with pytest.raises(ValueError):
        ContinuousConeProblem([1.0, 0.0, 0.0], sp.csr_matrix([[0.0, 1.0]]), [1.0],
                              ConeProduct((ConeSpec.soc(2),)))
    with pytest.raises(ValueError):
        solve_conic(soc2_problem(), tol=0.0)


# kkt residuals ----------------------------------------------------------

def test_kkt_residuals_of_exact_certificate():
    assert max(kkt_residuals(soc2_problem(), exact_soc2_certificate())) <= 1e-9


def test_kkt_gap_after_perturbation():
    cert = exact_soc2_certificate()
    cert.z = cert.z + np.array([0.1, 0.0])
    # |1.1 - 1| / (1 + 1.1); tests/oracles.py evaluates it to 0.047619
    assert kkt_residuals(soc2_problem(), cert)[2] == pytest.approx(0.047619, abs=1e-6)


def test_kkt_rejects_infeasible_certificate():
    cert = SolveCertificate(Status.INFEASIBLE, lam=np.array([-1.0]), beta=np.array([1.0]))
    with pytest.raises(ValueError):
        kkt_residuals(soc2_problem(), cert)


# properties over random subproblems ------------------------------------

def test_certificate_invariants(solved):
    statuses = {cert.status for _, cert in solved}
    assert Status.OPTIMAL in statuses and Status.INFEASIBLE in statuses
    for q, cert in solved:
        check_invariants(q, cert)


def test_optimal_residuals_within_tolerance(solved):
    for q, cert in solved:
        if cert.status is Status.OPTIMAL:
            assert max(kkt_residuals(q, cert)) <= 1e-7
            assert member_all(q, cert.z, 1e-6)


def member_all(q, z, tol):
    return all(member(s, z[q.cone.block(i)], tol * (1 + np.linalg.norm(z)))
               for i, s in enumerate(q.cone.factors))


def test_weak_duality(solved):
    for q, cert in solved:
        if cert.status is Status.OPTIMAL:
            # tol is relative, as in the gap residual
            cz = q.c @ cert.z
            assert cz >= cert.lam @ q.rhs - 1e-7 * (1 + abs(cz))


def affine_samples(q, z0, rng, count, scale):
    """Points of {z : A z = rhs} around z0."""
    N = la.null_space(q.A.toarray())
    if N.shape[1] == 0:
        return np.repeat(z0[None, :], count, axis=0)
    w = rng.normal(size=(count, N.shape[1])) * scale
    return z0 + w @ N.T


def test_optimal_cut_bounds_value(solved):
    # every z' on the affine set with beta.z' >= 0 costs at least the subproblem value
    rng = np.random.default_rng(12)
    checked = 0
    for q, cert in solved:
        if cert.status is not Status.OPTIMAL:
            continue
        for scale in (0.1, 1.0, 10.0):
            Z = affine_samples(q, cert.z, rng, 1000, scale)
            keep = Z @ cert.beta >= 0
            assert np.all(Z[keep] @ q.c >= cert.value - 1e-6)
            checked += int(keep.sum())
    assert checked >= 1000


def test_infeasibility_ray_separates_affine_set(solved):
    rng = np.random.default_rng(13)
    seen = 0
    for q, cert in solved:
        if cert.status is not Status.INFEASIBLE:
            continue
        z0 = np.linalg.lstsq(q.A.toarray(), q.rhs, rcond=None)[0]
        assert np.allclose(q.A @ z0, q.rhs, atol=1e-9)
        for scale in (0.1, 1.0, 10.0):
            Z = affine_samples(q, z0, rng, 1000, scale)
            assert np.all(Z @ cert.beta < 0)
        seen += 1
    assert seen > 0


def test_determinism():
    for q in subproblems(n_instances=3, per_instance=3, seed=5):
        a, b = solve_conic(q), solve_conic(q)
        assert a.status is b.status and a.iterations == b.iterations
        for f in ("z", "lam", "beta"):
            x, y = getattr(a, f), getattr(b, f)
            assert (x is None and y is None) or np.array_equal(x, y)


# stalled embedding ------------------------------------------------------

def stalled_problem():
    return parse_conic((DATA / "stall_infeasible.cone").read_text()).subproblem([])


def test_feasibility_probe_certifies_stalled_instance():
    q = stalled_problem()
    cert = solve_conic(q)
    assert cert.status is Status.INFEASIBLE
    check_invariants(q, cert)
    assert cert.lam @ q.rhs == pytest.approx(1.0, abs=1e-6)


def test_without_probe_the_same_instance_fails():
    cert = solve_conic(stalled_problem(), feasibility_probe=False, max_iters=3000)
    assert cert.status is Status.NUMERICAL_FAILURE
