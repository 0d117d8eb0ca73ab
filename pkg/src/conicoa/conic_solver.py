"""Continuous conic solver for ``min c.z  s.t.  A z = rhs,  z in K``.

The problem is embedded in the homogeneous self-dual form and solved by
operator splitting (ADMM): every iteration is one solve with a matrix
factored once up front plus one projection onto the cone product. The
embedding yields an infeasibility ray when the problem has no solution,
which is what the outer-approximation loop turns into a feasibility cut.

Certificates are reported in the multiplier convention of the dual

    max  lam . rhs   s.t.  beta = c - A^T lam,  beta in K*

so that an optimal certificate carries ``(z, lam, beta)`` and an infeasible one
a ray with ``beta = -A^T lam``, ``beta in K*`` and ``lam . rhs = 1``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .cones import (ConeProduct, ConeSpec, ConeTag, ProductProjector, ProjectionError, as_product,
                    dual_distance, interior_point)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True, eq=False)
class ContinuousConeProblem:
    """``min c.z  s.t.  A z = rhs,  z in cone``."""

    c: np.ndarray
    A: sp.csr_matrix
    rhs: np.ndarray
    cone: ConeProduct

    def __post_init__(self):
        cone = as_product(self.cone)
        c = np.asarray(self.c, dtype=float).ravel()
        rhs = np.asarray(self.rhs, dtype=float).ravel()
        A = sp.csr_matrix(self.A, dtype=float)
        if A.shape == (0, 0) and c.size:
            A = sp.csr_matrix((rhs.size, c.size))
        if c.size != cone.dim:
            raise ValueError(f"objective has length {c.size}, cone dimension is {cone.dim}")
        if A.shape != (rhs.size, cone.dim):
            raise ValueError(f"A has shape {A.shape}, expected ({rhs.size}, {cone.dim})")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "cone", cone)


@dataclass
class SolveCertificate:
    status: Status
    z: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    value: Optional[float] = None
    residuals: tuple = (np.inf, np.inf, np.inf)
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.INFEASIBLE)


def kkt_residuals(p: ContinuousConeProblem, cert: SolveCertificate):
    """Relative ``(primal, dual, gap)`` residuals of an optimal certificate.

    primal: ``|A z - rhs| / (1 + |rhs|)``
    dual:   ``|beta - (c - A^T lam)| / (1 + |c|)`` plus the distance of beta to K*
    gap:    ``|c.z - lam.rhs| / (1 + |c.z|)``
    """
    if cert.status is not Status.OPTIMAL:
        raise ValueError(f"kkt_residuals needs an optimal certificate, got {cert.status.value}")
    z, lam, beta = cert.z, cert.lam, cert.beta
    pres = np.linalg.norm(p.A @ z - p.rhs) / (1.0 + np.linalg.norm(p.rhs))
    dres = np.linalg.norm(beta - (p.c - p.A.T @ lam)) / (1.0 + np.linalg.norm(p.c))
    dres += dual_distance(p.cone, beta)
    cz = float(p.c @ z)
    gap = abs(cz - float(lam @ p.rhs)) / (1.0 + abs(cz))
    return float(pres), float(dres), float(gap)


def _equilibrate(M: np.ndarray, blocks, iters: int = 25):
    """Ruiz scaling ``E M D``; rows inside one nonlinear cone block share a factor."""
    m, n = M.shape
    E = np.ones(m)
    D = np.ones(n)
    S = M.copy()
    for _ in range(iters):
        rn = np.abs(S).max(axis=1) if n else np.ones(m)
        for sl in blocks:
            rn[sl] = rn[sl].max()
        cn = np.abs(S).max(axis=0) if m else np.ones(n)
        rn = np.where(rn < 1e-8, 1.0, rn)
        cn = np.where(cn < 1e-8, 1.0, cn)
        er = 1.0 / np.sqrt(rn)
        dc = 1.0 / np.sqrt(cn)
        E *= er
        D *= dc
        S = er[:, None] * S * dc[None, :]
        if np.all(np.abs(1 - rn) < 1e-2) and np.all(np.abs(1 - cn) < 1e-2):
            break
    np.clip(E, 1e-4, 1e4, out=E)
    np.clip(D, 1e-4, 1e4, out=D)
    return E, D


class _Embedding:
    """Scaled homogeneous self-dual embedding of one problem.

    Internally the problem is written as ``min c.x  s.t.  A_s x + s = b_s``
    with ``A_s = [A; -I]``, ``b_s = [rhs; 0]`` and ``s in {0}^m x K``.
    """

    def __init__(self, p: ContinuousConeProblem, scale: bool):
        self.p = p
        m, k = p.A.shape
        self.m, self.k = m, k
        A_s = np.vstack([p.A.toarray(), -np.eye(k)])
        b_s = np.concatenate([p.rhs, np.zeros(k)])
        blocks = []
        for i, spec in enumerate(p.cone.factors):
            if spec.tag in (ConeTag.SOC, ConeTag.EXP, ConeTag.POW):
                sl = p.cone.block(i)
                blocks.append(slice(m + sl.start, m + sl.stop))
        if scale:
            E, D = _equilibrate(A_s, blocks)
        else:
            E, D = np.ones(m + k), np.ones(k)
        self.E, self.D = E, D
        As = E[:, None] * A_s * D[None, :]
        bs = E * b_s
        cs = D * p.c
        # normalise the data vectors; the embedding is homogeneous so this only rescales tau
        self.sb = 1.0 / max(np.linalg.norm(bs), 1e-4) if bs.any() else 1.0
        self.sc = 1.0 / max(np.linalg.norm(cs), 1e-4) if cs.any() else 1.0
        self.sb = min(self.sb, 1e4)
        self.sc = min(self.sc, 1e4)
        bs = bs * self.sb
        cs = cs * self.sc
        self.As, self.bs, self.cs = As, bs, cs
        n, mm = k, m + k
        N = n + mm + 1
        Q = np.zeros((N, N))
        Q[:n, n:n + mm] = As.T
        Q[:n, -1] = cs
        Q[n:n + mm, :n] = -As
        Q[n:n + mm, -1] = bs
        Q[-1, :n] = -cs
        Q[-1, n:n + mm] = -bs
        self.lu = la.lu_factor(np.eye(N) + Q)
        self.n, self.mm, self.N = n, mm, N
        self.proj = ProductProjector(p.cone)

    def project_C(self, w: np.ndarray) -> np.ndarray:
        """Projection onto ``R^n x ({free}^m x K*) x R_+`` in scaled coordinates."""
        n, m = self.n, self.m
        out = w.copy()
        ys = w[n + m:n + self.mm]
        # scaled K* coordinates: E_K ys is in K* iff ys is (E_K is a positive
        # scalar on every nonlinear block and diagonal on the orthant)
        out[n + m:n + self.mm] = self.proj.dual(ys)
        out[-1] = max(w[-1], 0.0)
        return out

    # -- mapping back to original units -----------------------------------

    def unscale(self, u: np.ndarray, v: np.ndarray):
        n, mm = self.n, self.mm
        x = self.D * u[:n] / self.sb
        y = self.E * u[n:n + mm] / self.sc
        s = v[n:n + mm] / self.E / self.sb
        return x, y, s


def solve_conic(p: ContinuousConeProblem, tol: float = DEFAULT_TOL, max_iters: int = 50000,
                relaxation: float = 1.5, scale: bool = True, check_every: int = 10,
                anderson: int = 10, feasibility_probe: bool = True) -> SolveCertificate:
    """Solve a continuous conic problem and return a certificate.

    Parameters
    ----------
    p : ContinuousConeProblem
    tol : float
        Target for all three relative residuals; also the acceptance threshold
        for infeasibility and unboundedness rays (normalised so that
        ``lam . rhs = 1``, respectively ``c . z = -1``).
    max_iters : int
        Iteration cap; reaching it yields ``Status.NUMERICAL_FAILURE``.
    relaxation : float
        Over-relaxation parameter in (0, 2).
    scale : bool
        Equilibrate rows and columns before iterating.
    anderson : int
        Memory of the safeguarded Anderson acceleration; 0 disables it.
    feasibility_probe : bool
        When the embedding stalls with both ``tau`` and ``kappa`` near zero,
        try to certify infeasibility through an auxiliary feasibility problem.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, k = p.A.shape
    if k == 0:
        return _solve_empty(p, tol)
    emb = _Embedding(p, scale)
    N = emb.N

    def step(zz):
        u, v = zz[:N], zz[N:]
        ut = la.lu_solve(emb.lu, u + v, check_finite=False)
        ur = relaxation * ut + (1.0 - relaxation) * u
        u_new = emb.project_C(ur - v)
        return np.concatenate([u_new, v - ur + u_new])

    z = np.zeros(2 * N)
    z[N - 1] = 1.0
    z[-1] = 1.0
    acc = _Anderson(anderson) if anderson > 0 else None
    it = 0
    f = z
    probed = not feasibility_probe
    try:
        for it in range(1, max_iters + 1):
            f = step(z)
            if acc is not None:
                z = acc.update(z, f)
            else:
                z = f
            if it % check_every == 0 or it == max_iters:
                cert = _check(emb, f[:N], f[N:], tol, it)
                if cert is not None:
                    return cert
                if not probed and it >= _STALL_AFTER and _stalled(f, N):
                    # tau and kappa both vanish: decide feasibility separately
                    probed = True
                    cert = _phase_one(p, tol, max_iters, relaxation, scale, check_every, anderson)
                    if cert is not None:
                        cert.iterations += it
                        return cert
    except ProjectionError as err:
        return SolveCertificate(Status.NUMERICAL_FAILURE, iterations=it,
                                message=f"cone projection failed: {err}")
    return _best_effort(emb, f[:N], f[N:], it)


_STALL_AFTER = 2000


def _stalled(f, N) -> bool:
    scale = np.linalg.norm(f[:N])
    return f[N - 1] <= 1e-6 * scale and f[-1] <= 1e-6 * scale


def _phase_one(p: ContinuousConeProblem, tol, max_iters, relaxation, scale, check_every, anderson):
    """Infeasibility certificate from a bounded auxiliary problem, or None.

    With ``e`` interior to K, solve ``min r`` over ``(w, r)`` in ``K x R+``
    subject to ``A w - r A e = rhs - A e``, i.e. ``z = w - (r - 1) e`` solves
    ``A z = rhs`` and sits at depth ``1 - r`` inside K. The problem is
    bounded below, and its dual gives ``beta = -A'lam`` in K* with
    ``r* = lam . rhs + e . beta`` and ``e . beta <= 1``; so ``r* > 1`` yields
    ``lam . rhs > 0``, a Farkas ray for the original system.
    """
    e = np.concatenate([interior_point(f) for f in p.cone.factors])
    Ae = p.A @ e
    A1 = sp.hstack([p.A, sp.csr_matrix(-Ae[:, None])]).tocsr()
    cone1 = ConeProduct(tuple(p.cone.factors) + (ConeSpec.nonneg(1),))
    c1 = np.zeros(p.A.shape[1] + 1)
    c1[-1] = 1.0
    aux = ContinuousConeProblem(c1, A1, p.rhs - Ae, cone1)
    aux_tol = tol / 4.0
    spent = 0
    for _ in range(3):
        sol = solve_conic(aux, tol=aux_tol, max_iters=max_iters, relaxation=relaxation, scale=scale,
                          check_every=check_every, anderson=anderson, feasibility_probe=False)
        spent += sol.iterations
        if sol.status is not Status.OPTIMAL:
            return None
        lr = float(sol.lam @ p.rhs)
        if sol.value <= 1.0 or lr <= 0:
            return None
        lam = sol.lam / lr
        beta = sol.beta[:-1] / lr
        res = float(np.linalg.norm(beta + p.A.T @ lam))
        if res <= tol:
            break
        # normalising by lam . rhs amplified the error; tighten and retry
        aux_tol *= max(1e-3, 0.5 * tol / res)
    else:
        return None
    return SolveCertificate(Status.INFEASIBLE, lam=lam, beta=beta, residuals=(res, 0.0, 0.0),
                            iterations=spent)


class _Anderson:
    """Type-II Anderson acceleration of a fixed-point map with a residual safeguard.

    ``update(z, f)`` receives the current point and its image ``f = F(z)``
    and returns the next point. An extrapolated point is kept only if the
    residual it produces is no larger than the residual of the plain
    iterate it replaced; otherwise the plain iterate is restored and the
    memory cleared.
    """

    def __init__(self, mem: int, reg: float = 1e-10):
        self.mem = mem
        self.reg = reg
        self.dz, self.dg = [], []
        self.prev_z = self.prev_g = None
        self.fallback = None
        self.base_norm = np.inf

    def update(self, z, f):
        g = f - z
        ng = float(np.linalg.norm(g))
        if self.fallback is not None and ng > self.base_norm:
            # the extrapolation made things worse: continue from the plain iterate
            z_plain = self.fallback
            self.dz.clear()
            self.dg.clear()
            self.prev_z = self.prev_g = None
            self.fallback = None
            self.base_norm = np.inf
            return z_plain
        if self.prev_z is not None:
            self.dz.append(z - self.prev_z)
            self.dg.append(g - self.prev_g)
            if len(self.dz) > self.mem:
                self.dz.pop(0)
                self.dg.pop(0)
        self.prev_z, self.prev_g = z, g
        if not self.dz or not np.isfinite(ng):
            self.fallback = None
            self.base_norm = np.inf
            return f
        Y = np.column_stack(self.dg)
        S = np.column_stack(self.dz)
        gram = Y.T @ Y
        gram += self.reg * (np.trace(gram) + 1e-300) * np.eye(gram.shape[0])
        try:
            gamma = np.linalg.solve(gram, Y.T @ g)
        except np.linalg.LinAlgError:
            gamma = np.linalg.lstsq(Y, g, rcond=None)[0]
        z_acc = f - (S + Y) @ gamma
        if not np.all(np.isfinite(z_acc)):
            self.fallback = None
            return f
        self.fallback = f
        self.base_norm = ng
        return z_acc


def _certificate_optimal(emb: _Embedding, u, v, it):
    tau = u[-1]
    x, y, s = emb.unscale(u / tau, v / tau)
    m = emb.m
    z = s[m:]
    lam = -y[:m]
    beta = y[m:]
    p = emb.p
    cz = float(p.c @ z)
    cert = SolveCertificate(Status.OPTIMAL, z=z, lam=lam, beta=beta, value=cz, iterations=it)
    cert.residuals = kkt_residuals(p, cert)
    return cert


def _check(emb: _Embedding, u, v, tol, it):
    p = emb.p
    m = emb.m
    tau, kappa = u[-1], v[-1]
    if tau > 1e-10 * max(1.0, kappa):
        cert = _certificate_optimal(emb, u, v, it)
        if max(cert.residuals) <= tol:
            return cert
    x, y, s = emb.unscale(u, v)
    # infeasibility: a dual ray with lam . rhs > 0
    lam = -y[:m]
    beta = y[m:]
    lr = float(lam @ p.rhs)
    if lr > 0:
        lam_n = lam / lr
        beta_n = beta / lr
        res = np.linalg.norm(beta_n + p.A.T @ lam_n)
        if res <= tol:
            return SolveCertificate(Status.INFEASIBLE, lam=lam_n, beta=beta_n,
                                    residuals=(float(res), 0.0, 0.0), iterations=it)
    # unboundedness: a primal ray z in K with A z = 0 and c . z < 0
    z = s[m:]
    cz = float(p.c @ z)
    if cz < 0:
        z_n = z / -cz
        res = np.linalg.norm(p.A @ z_n)
        if res <= tol:
            return SolveCertificate(Status.UNBOUNDED, z=z_n, value=-np.inf,
                                    residuals=(float(res), 0.0, 0.0), iterations=it)
    return None


def _best_effort(emb, u, v, it):
    tau = u[-1]
    if tau > 0:
        cert = _certificate_optimal(emb, u, v, it)
        res = cert.residuals
    else:
        cert = SolveCertificate(Status.NUMERICAL_FAILURE, iterations=it)
        res = (np.inf, np.inf, np.inf)
    cert.status = Status.NUMERICAL_FAILURE
    cert.message = ("iteration cap reached with residuals "
                    f"primal={res[0]:.2e} dual={res[1]:.2e} gap={res[2]:.2e}, tau={tau:.2e}, "
                    f"kappa={v[-1]:.2e}")
    return cert


def _solve_empty(p: ContinuousConeProblem, tol: float) -> SolveCertificate:
    """No cone variables: the problem is feasible iff rhs = 0."""
    nr = float(np.linalg.norm(p.rhs))
    if nr <= tol:
        return SolveCertificate(Status.OPTIMAL, z=np.zeros(0), lam=np.zeros(p.rhs.size),
                                beta=np.zeros(0), value=0.0, residuals=(nr, 0.0, 0.0))
    lam = p.rhs / nr ** 2
    return SolveCertificate(Status.INFEASIBLE, lam=lam, beta=np.zeros(0),
                            residuals=(0.0, 0.0, 0.0))
