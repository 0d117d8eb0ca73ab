"""Conic outer approximation for mixed-integer conic problems.

The problem is

    min  c.z   s.t.  A_x x + A_z z = b,  L <= x <= U,  x integer,  z in K.

The loop alternates an MILP master, which replaces ``z in K`` by finitely
many linear cuts ``beta.z_k >= 0`` with ``beta in K_k*``, and continuous conic
subproblems at the master's integer assignment. Optimal subproblems supply
their dual vector as an optimality cut, infeasible ones a dual ray as a
feasibility cut; either way the master can never return the same
assignment again without closing the gap.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import cones
from .cones import ConeProduct, ConeSpec, ConeTag, as_product
from .conic_solver import DEFAULT_TOL, ContinuousConeProblem, Status, solve_conic
from .milp import Cut, MasterLP, MilpProblem, MilpStatus, solve_milp

logger = logging.getLogger(__name__)

DEFAULT_GAP = 1e-5
DEFAULT_MAX_ITERS = 1000
_RAY_ROUNDS = 50
_DUPLICATE_TOL = 1e-9  # unit cuts closer than this entrywise count as one


class OaStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    SUBPROBLEM_FAILURE = "subproblem_failure"


class RepeatedAssignmentError(RuntimeError):
    """The master returned an integer assignment it had already produced."""

    def __init__(self, assignment, iteration):
        self.assignment = tuple(assignment)
        self.iteration = iteration
        super().__init__(f"integer assignment {self.assignment} repeated at iteration {iteration}; "
                         "a cut failed to separate it (strong duality or dual ray assumption violated)")


@dataclass(frozen=True, eq=False)
class ConicProblem:
    """Mixed-integer conic problem data; every entry of ``x`` is integer.

    The solver minimises ``c.z``. ``offset`` and ``sign`` only affect how a
    value is reported (``sign * (c.z + offset)``), which lets a lowered
    maximisation model or one with a constant term keep its own objective.
    """

    c: np.ndarray
    A_x: sp.csr_matrix
    A_z: sp.csr_matrix
    b: np.ndarray
    L: np.ndarray
    U: np.ndarray
    cone: ConeProduct
    offset: float = 0.0
    sign: float = 1.0

    def __post_init__(self):
        cone = as_product(self.cone)
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        L = np.asarray(self.L, dtype=float).ravel()
        U = np.asarray(self.U, dtype=float).ravel()
        A_x = sp.csr_matrix(self.A_x, dtype=float) if np.size(self.A_x) or sp.issparse(self.A_x) \
            else sp.csr_matrix((b.size, L.size))
        A_z = sp.csr_matrix(self.A_z, dtype=float) if np.size(self.A_z) or sp.issparse(self.A_z) \
            else sp.csr_matrix((b.size, cone.dim))
        if c.size != cone.dim:
            raise ValueError(f"objective has length {c.size}, cone dimension is {cone.dim}")
        if A_z.shape != (b.size, cone.dim):
            raise ValueError(f"A_z has shape {A_z.shape}, expected ({b.size}, {cone.dim})")
        if A_x.shape != (b.size, L.size):
            raise ValueError(f"A_x has shape {A_x.shape}, expected ({b.size}, {L.size})")
        if U.size != L.size:
            raise ValueError("L and U differ in length")
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(U))):
            raise ValueError("integer bounds must be finite")
        if np.any(L > U):
            raise ValueError("bounds must satisfy L <= U")
        if np.any(L != np.round(L)) or np.any(U != np.round(U)):
            L, U = np.ceil(L), np.floor(U)
        for name, val in (("c", c), ("b", b), ("A_x", A_x.data), ("A_z", A_z.data)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} has non-finite entries")
        if self.sign not in (1.0, -1.0) or not math.isfinite(self.offset):
            raise ValueError("sign must be +1 or -1 and offset finite")
        for k, v in (("c", c), ("b", b), ("L", L), ("U", U), ("A_x", A_x), ("A_z", A_z), ("cone", cone),
                     ("offset", float(self.offset)), ("sign", float(self.sign))):
            object.__setattr__(self, k, v)

    def reported(self, value):
        """Map a value of ``c.z`` to the reported objective."""
        if value is None:
            return None
        return self.sign * (value + self.offset)

    @property
    def n(self) -> int:
        return self.L.size

    def assignments(self) -> int:
        """Number of integer points in the box ``[L, U]``."""
        return int(np.prod(self.U - self.L + 1)) if self.n else 1

    def subproblem(self, x) -> ContinuousConeProblem:
        rhs = self.b - self.A_x @ np.asarray(x, dtype=float)
        return ContinuousConeProblem(self.c, self.A_z, rhs, self.cone)

    def relaxation(self) -> ContinuousConeProblem:
        """Continuous relaxation with ``x = L + s`` and ``s + t = U - L``, ``s, t >= 0``."""
        n, m = self.n, self.b.size
        I = sp.identity(n, format="csr")
        top = sp.hstack([self.A_z, self.A_x, sp.csr_matrix((m, n))])
        bot = sp.hstack([sp.csr_matrix((n, self.cone.dim)), I, I])
        A = sp.vstack([top, bot]).tocsr()
        rhs = np.concatenate([self.b - self.A_x @ self.L, self.U - self.L])
        c = np.concatenate([self.c, np.zeros(2 * n)])
        factors = self.cone.factors + ((ConeSpec.nonneg(2 * n),) if n else ())
        return ContinuousConeProblem(c, A, rhs, ConeProduct(factors))

    def is_feasible(self, x, z, tol: float = 1e-6) -> bool:
        x = np.asarray(x, float)
        z = np.asarray(z, float)
        if np.any(x < self.L - tol) or np.any(x > self.U + tol) or np.any(np.abs(x - np.round(x)) > tol):
            return False
        if np.linalg.norm(self.A_x @ x + self.A_z @ z - self.b, np.inf) > tol:
            return False
        return cones.product_member(self.cone, z, tol)


@dataclass
class CutPool:
    """Cuts keyed by cone factor index; factor ``-1`` holds aggregated cuts over all of z."""

    cone: ConeProduct
    cuts: dict = field(default_factory=dict)

    def add(self, factor: int, beta) -> Cut:
        beta = np.asarray(beta, dtype=float)
        offset = 0 if factor < 0 else self.cone.offsets[factor]
        cut = Cut(offset, beta)
        self.cuts.setdefault(factor, []).append(cut)
        return cut

    def contains(self, factor: int, beta, tol: float = 1e-9) -> bool:
        """True if ``beta`` matches a stored cut of the same factor entrywise within ``tol``."""
        beta = np.asarray(beta, dtype=float)
        return any(c.beta.shape == beta.shape and np.max(np.abs(c.beta - beta)) <= tol
                   for c in self.cuts.get(factor, ()))

    def __len__(self):
        return sum(len(v) for v in self.cuts.values())

    def __iter__(self):
        for k in sorted(self.cuts):
            yield from ((k, c) for c in self.cuts[k])


@dataclass
class OaState:
    z_U: float = math.inf
    z_L: float = -math.inf
    pool: Optional[CutPool] = None
    incumbent: Optional[tuple] = None
    iteration: int = 0
    visited: set = field(default_factory=set)


@dataclass
class OaOutcome:
    status: OaStatus
    objective: Optional[float]
    x: Optional[np.ndarray]
    z: Optional[np.ndarray]
    bounds: tuple
    iterations: int
    log: list
    cuts: int = 0
    message: str = ""

    @property
    def gap(self) -> float:
        lo, hi = self.bounds
        return hi - lo if np.isfinite(hi) and np.isfinite(lo) else math.inf


def format_record(rec: dict) -> str:
    """One ``key=value`` line; floats use ``repr`` so a parse round-trips exactly."""
    parts = []
    for k, v in rec.items():
        if isinstance(v, float):
            v = repr(v)
        parts.append(f"{k}={v}")
    return " ".join(parts)


def parse_record(line: str) -> dict:
    out = {}
    for tok in line.split():
        k, _, v = tok.partition("=")
        if k in ("iter", "cuts", "iterations"):
            out[k] = int(v)
        elif k in ("z_L", "z_U", "gap", "objective"):
            out[k] = float(v)
        else:
            out[k] = v
    return out


def _unit(beta) -> Optional[np.ndarray]:
    nrm = float(np.linalg.norm(beta))
    if not np.isfinite(nrm) or nrm <= 1e-12:
        return None
    return np.asarray(beta, float) / nrm


def _fallback_cut(spec: ConeSpec) -> np.ndarray:
    """A unit vector of K*: the separator of the negated interior point."""
    if spec.tag is ConeTag.ZERO:
        e = np.zeros(spec.dim)
        e[0] = 1.0
        return e
    return cones.separate(spec, -cones.interior_point(spec))


def initialize_cuts(p: ConicProblem, tol: float = DEFAULT_TOL):
    """Seed the cut pool from the continuous relaxation.

    Returns
    -------
    pool : CutPool
        One unit cut per cone factor.
    cert : SolveCertificate
        The relaxation certificate; its value, when optimal, is a valid lower
        bound and an ``INFEASIBLE`` status proves the whole problem infeasible.
    """
    cert = solve_conic(p.relaxation(), tol=tol)
    pool = CutPool(p.cone)
    for i, spec in enumerate(p.cone.factors):
        beta = None
        if cert.status is Status.OPTIMAL:
            beta = _unit(cert.beta[p.cone.block(i)])
            if beta is not None and not cones.dual_member(spec, beta):
                beta = None
        if beta is None:
            beta = _fallback_cut(spec)
        pool.add(i, beta)
    return pool, cert


def assert_no_repeat(state: OaState, x_hat) -> bool:
    """Record ``x_hat``; return False if it was visited before."""
    key = tuple(int(v) for v in np.round(np.asarray(x_hat, float)))
    if key in state.visited:
        return False
    state.visited.add(key)
    return True


def _master(p: ConicProblem, pool: CutPool) -> MilpProblem:
    nz = p.cone.dim
    z_lo = np.full(nz, -np.inf)
    z_hi = np.full(nz, np.inf)
    # polyhedral factors are imposed exactly; their cuts are then redundant
    for i, spec in enumerate(p.cone.factors):
        sl = p.cone.block(i)
        if spec.tag is ConeTag.ZERO:
            z_lo[sl] = 0.0
            z_hi[sl] = 0.0
        elif spec.tag is ConeTag.NONNEG:
            z_lo[sl] = 0.0
    c = np.concatenate([np.zeros(p.n), p.c])
    return MilpProblem(c, p.A_x.toarray(), p.A_z.toarray(), p.b, p.L, p.U,
                       np.ones(p.n, bool), cuts=[cut for _, cut in pool],
                       z_lower=z_lo, z_upper=z_hi)


def _gap(z_U, z_L, relative: bool) -> float:
    if not (np.isfinite(z_U) and np.isfinite(z_L)):
        return math.inf
    g = z_U - z_L
    return g / (1.0 + abs(z_U)) if relative else g


def _new_cuts(p: ConicProblem, beta, aggregate: bool):
    """Unit cuts from a dual vector; one per nonlinear factor unless aggregated."""
    if aggregate:
        b = _unit(beta)
        return [] if b is None else [(-1, b)]
    out = []
    for i, spec in enumerate(p.cone.factors):
        if spec.is_polyhedral:
            continue
        b = _unit(beta[p.cone.block(i)])
        if b is not None:
            out.append((i, b))
    return out


def run(p: ConicProblem, eps: float = DEFAULT_GAP, max_iters: int = DEFAULT_MAX_ITERS, *,
        aggregate: bool = False, relative_gap: bool = False, subproblem_tol: float = DEFAULT_TOL,
        node_limit: int = 100000, on_record: Optional[Callable[[dict], None]] = None,
        state: Optional[OaState] = None) -> OaOutcome:
    """Run conic outer approximation.

    Parameters
    ----------
    p : ConicProblem
    eps : float
        Stop when ``z_U - z_L < eps`` (or the relative gap with ``relative_gap``).
    max_iters : int
        Cap on the number of conic subproblems.
    aggregate : bool
        Add one cut over all of z per iteration instead of one per cone factor.
    on_record : callable, optional
        Receives every log record (a dict) as it is produced.
    state : OaState, optional
        Filled in place, for inspection after the run.

    Raises
    ------
    RepeatedAssignmentError
        If the master repeats an assignment before the gap closes.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    st = state if state is not None else OaState()
    records: list = []

    def emit(rec):
        records.append(rec)
        logger.info(format_record(rec))
        if on_record is not None:
            on_record(rec)

    def finish(status, message=""):
        gap = _gap(st.z_U, st.z_L, relative_gap)
        if status is OaStatus.OPTIMAL:
            assert gap < eps
        rec = {"final": status.value, "iterations": st.iteration, "z_L": float(st.z_L),
               "z_U": float(st.z_U), "gap": float(gap), "cuts": len(st.pool) if st.pool else 0}
        emit(rec)
        x = z = obj = None
        if st.incumbent is not None:
            x, z = st.incumbent
            obj = float(st.z_U)
        return OaOutcome(status, obj, x, z, (float(st.z_L), float(st.z_U)), st.iteration, records,
                         cuts=rec["cuts"], message=message)

    pool, relax = initialize_cuts(p, subproblem_tol)
    st.pool = pool
    if relax.status is Status.INFEASIBLE:
        return finish(OaStatus.INFEASIBLE, "continuous relaxation is infeasible")
    if relax.status is Status.OPTIMAL:
        # the relaxation is solved to tolerance; keep the bound slightly conservative
        st.z_L = float(relax.value) - subproblem_tol * (1.0 + abs(relax.value))

    mp = _master(p, pool)
    master = MasterLP(mp)

    def push(cuts):
        # an identical cut is already in the master; adding it again changes nothing
        added = 0
        for k, beta in cuts:
            if not pool.contains(k, beta, _DUPLICATE_TOL):
                mp.add_cut(pool.add(k, beta))
                added += 1
        return added

    while True:
        if st.iteration >= max_iters:
            return finish(OaStatus.ITERATION_LIMIT, f"iteration limit {max_iters} reached")
        res = solve_milp(mp, node_limit=node_limit, master=master)
        rounds = 0
        while res.status is MilpStatus.UNBOUNDED and rounds < _RAY_ROUNDS:
            # separate the improving ray of the relaxation from the cone
            dz = res.ray[p.n:]
            dz = dz / max(np.linalg.norm(dz), 1e-300)
            new = []
            for i, spec in enumerate(p.cone.factors):
                if spec.is_polyhedral:
                    continue
                beta = cones.separate(spec, dz[p.cone.block(i)])
                if beta is not None:
                    new.append((i, beta))
            if not new or push(new) == 0:
                break
            rounds += 1
            res = solve_milp(mp, node_limit=node_limit, master=master)
        if res.status is MilpStatus.INFEASIBLE:
            return finish(OaStatus.INFEASIBLE, "master problem is infeasible")
        if res.status is MilpStatus.UNBOUNDED:
            if rounds < _RAY_ROUNDS:
                return finish(OaStatus.UNBOUNDED, "the master has an improving ray inside the cone")
            return finish(OaStatus.SUBPROBLEM_FAILURE, "could not bound the master problem")
        if res.status is not MilpStatus.OPTIMAL:
            return finish(OaStatus.SUBPROBLEM_FAILURE, f"master problem: {res.message or res.status.value}")

        w_T = float(res.value)
        st.z_L = max(st.z_L, w_T)
        if _gap(st.z_U, st.z_L, relative_gap) < eps:
            return finish(OaStatus.OPTIMAL)
        x_hat = np.round(res.x)
        if not assert_no_repeat(st, x_hat):
            raise RepeatedAssignmentError(x_hat.astype(int), st.iteration + 1)

        cert = solve_conic(p.subproblem(x_hat), tol=subproblem_tol)
        st.iteration += 1
        if cert.status is Status.OPTIMAL:
            if cert.value < st.z_U:
                st.z_U = float(cert.value)
                st.incumbent = (x_hat.copy(), cert.z.copy())
            new = _new_cuts(p, cert.beta, aggregate)
        elif cert.status is Status.INFEASIBLE:
            new = _new_cuts(p, cert.beta, aggregate)
        else:
            emit({"iter": st.iteration, "z_L": float(st.z_L), "z_U": float(st.z_U),
                  "gap": float(_gap(st.z_U, st.z_L, relative_gap)), "status": cert.status.value,
                  "cuts": 0})
            return finish(OaStatus.SUBPROBLEM_FAILURE,
                          f"subproblem at x={tuple(int(v) for v in x_hat)}: {cert.status.value} "
                          f"{cert.message}".strip())
        added = push(new)
        gap = _gap(st.z_U, st.z_L, relative_gap)
        emit({"iter": st.iteration, "z_L": float(st.z_L), "z_U": float(st.z_U), "gap": float(gap),
              "status": cert.status.value, "cuts": added})
        if gap < eps:
            return finish(OaStatus.OPTIMAL)
