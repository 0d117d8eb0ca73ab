"""Mixed-integer linear programs by LP-based branch-and-bound.

The master problem of the outer-approximation loop is

    min c.(x, z)  s.t.  A_x x + A_z z = b,  L <= x <= U,  x_I integer,
                        beta_k . z[block_k] >= 0  for every stored cut

with optional simple bounds on z. Search uses most-fractional branching
(lowest index breaks ties) and best-bound node selection, preferring deeper
nodes among equal bounds. Child LPs are warm started from the parent basis
with the dual simplex.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .lp import LinearProgram, LpStatus

INT_TOL = 1e-6
DEFAULT_NODE_LIMIT = 100000
_KEEP_INVERSE_NODES = 64  # open nodes beyond this refactor on restore


class MilpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NODE_LIMIT = "node_limit"
    FAILURE = "failure"


@dataclass(frozen=True)
class Cut:
    """The linear constraint ``beta . z[offset:offset + len(beta)] >= 0``."""

    offset: int
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())

    def evaluate(self, z) -> float:
        return float(self.beta @ np.asarray(z)[self.offset:self.offset + self.beta.size])


@dataclass
class MilpProblem:
    """Master problem data over the stacked variable ``(x, z)``.

    Attributes
    ----------
    c : array
        Objective over ``(x, z)``.
    A_x, A_z, b : arrays or sparse matrices
        Equality rows ``A_x x + A_z z = b``.
    L, U : arrays
        Bounds on ``x``; finite wherever ``integer`` is set.
    integer : bool array
        Integrality marks on ``x``.
    cuts : list of Cut
        Each cut refers to a slice of ``z``.
    z_lower, z_upper : arrays, optional
        Simple bounds on ``z`` (default free).
    """

    c: np.ndarray
    A_x: np.ndarray
    A_z: np.ndarray
    b: np.ndarray
    L: np.ndarray
    U: np.ndarray
    integer: np.ndarray
    cuts: list = field(default_factory=list)
    z_lower: Optional[np.ndarray] = None
    z_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A_x = _dense(self.A_x)
        self.A_z = _dense(self.A_z)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.L = np.asarray(self.L, dtype=float).ravel()
        self.U = np.asarray(self.U, dtype=float).ravel()
        self.c = np.asarray(self.c, dtype=float).ravel()
        nx, nz = self.L.size, self.A_z.shape[1]
        if self.A_x.size == 0:
            self.A_x = np.zeros((self.b.size, nx))
        if self.A_z.size == 0:
            self.A_z = np.zeros((self.b.size, nz))
        self.integer = np.broadcast_to(np.asarray(self.integer, dtype=bool), (nx,)).copy()
        if self.A_x.shape != (self.b.size, nx) or self.A_z.shape[0] != self.b.size:
            raise ValueError("row dimensions of A_x, A_z and b disagree")
        if self.c.size != nx + nz:
            raise ValueError(f"objective has length {self.c.size}, expected {nx + nz}")
        if self.U.size != nx or np.any(self.L > self.U):
            raise ValueError("bounds must satisfy L <= U")
        if np.any(self.integer & ~(np.isfinite(self.L) & np.isfinite(self.U))):
            raise ValueError("integer variables need finite bounds")
        self.z_lower = np.full(nz, -np.inf) if self.z_lower is None else np.asarray(self.z_lower, float)
        self.z_upper = np.full(nz, np.inf) if self.z_upper is None else np.asarray(self.z_upper, float)
        for cut in self.cuts:
            self._check_cut(cut)

    @property
    def nx(self) -> int:
        return self.L.size

    @property
    def nz(self) -> int:
        return self.A_z.shape[1]

    def _check_cut(self, cut: Cut):
        if cut.offset < 0 or cut.offset + cut.beta.size > self.nz:
            raise ValueError(f"cut at offset {cut.offset} with length {cut.beta.size} "
                             f"does not fit z of dimension {self.nz}")

    def add_cut(self, cut: Cut):
        self._check_cut(cut)
        self.cuts.append(cut)

    def cut_row(self, cut: Cut) -> np.ndarray:
        row = np.zeros(self.nx + self.nz)
        row[self.nx + cut.offset:self.nx + cut.offset + cut.beta.size] = cut.beta
        return row


@dataclass
class MilpResult:
    status: MilpStatus
    x: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    value: Optional[float] = None
    bound: float = -np.inf
    nodes: int = 0
    ray: Optional[np.ndarray] = None
    """Improving direction over ``(x, z)`` of the relaxation when unbounded."""
    message: str = ""


def _dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.atleast_2d(np.asarray(M, dtype=float)) if np.size(M) else np.asarray(M, float)


class MasterLP:
    """LP relaxation of a :class:`MilpProblem` that keeps its basis across solves.

    Cuts appended to the problem are mirrored with :meth:`sync` so that one
    simplex basis follows the outer-approximation loop from master to master.
    """

    def __init__(self, p: MilpProblem):
        self.p = p
        A = np.hstack([p.A_x, p.A_z])
        rows = [A] + [p.cut_row(c)[None, :] for c in p.cuts]
        A_all = np.vstack(rows) if rows else np.zeros((0, p.nx + p.nz))
        ncut = len(p.cuts)
        rlo = np.concatenate([p.b, np.zeros(ncut)])
        rhi = np.concatenate([p.b, np.full(ncut, np.inf)])
        lo = np.concatenate([p.L, p.z_lower])
        hi = np.concatenate([p.U, p.z_upper])
        self.lp = LinearProgram(p.c, A_all, rlo, rhi, lo, hi)
        self.ncuts = ncut

    def sync(self):
        new = self.p.cuts[self.ncuts:]
        if new:
            rows = np.vstack([self.p.cut_row(c) for c in new])
            self.lp.add_rows(rows, np.zeros(len(new)), np.full(len(new), np.inf))
            self.ncuts = len(self.p.cuts)


def _most_fractional(x, integer):
    frac = np.abs(x - np.round(x))
    frac = np.where(integer, frac, 0.0)
    j = int(np.argmax(frac))  # argmax returns the lowest index among ties
    if frac[j] <= INT_TOL:
        return -1
    return j


def solve_milp(p: MilpProblem, node_limit: int = DEFAULT_NODE_LIMIT,
               master: Optional[MasterLP] = None) -> MilpResult:
    """Globally solve a MILP by branch-and-bound.

    Parameters
    ----------
    p : MilpProblem
    node_limit : int
        Maximum number of LP relaxations; exceeding it returns
        ``MilpStatus.NODE_LIMIT`` with the incumbent found so far and the
        current global bound.
    master : MasterLP, optional
        A relaxation object built for ``p`` earlier; reused to warm start.

    Returns
    -------
    MilpResult
        ``UNBOUNDED`` is reported when the root relaxation is unbounded, with
        the improving ray of that relaxation.
    """
    if master is None:
        master = MasterLP(p)
    else:
        master.sync()
    lp = master.lp
    nx = p.nx
    integer_idx = np.flatnonzero(p.integer)
    root_lo = p.L.copy()
    root_hi = p.U.copy()

    def apply_bounds(lo, hi):
        for j in integer_idx:
            lp.set_bounds(j, lo[j], hi[j])

    apply_bounds(root_lo, root_hi)
    res = lp.solve()
    nodes = 1
    if res.status is LpStatus.INFEASIBLE:
        return MilpResult(MilpStatus.INFEASIBLE, nodes=nodes)
    if res.status is LpStatus.UNBOUNDED:
        return MilpResult(MilpStatus.UNBOUNDED, nodes=nodes, ray=res.ray, value=-np.inf,
                          message="LP relaxation is unbounded")
    if res.status is not LpStatus.OPTIMAL:
        return MilpResult(MilpStatus.FAILURE, nodes=nodes, message=f"root LP: {res.message}")
    root_state = lp.copy_state()

    best_val = np.inf
    best_sol = None
    counter = itertools.count()
    # (bound, -depth, tiebreak, lo, hi, basis state, lp solution)
    heap = [(res.value, 0, next(counter), root_lo, root_hi, root_state, res)]
    while heap:
        bound, negdepth, _, lo, hi, state, node_res = heapq.heappop(heap)
        if bound >= best_val - _prune_tol(best_val):
            continue
        x = node_res.x
        j = _most_fractional(x[:nx], p.integer)
        if j < 0:
            sol = x.copy()
            sol[integer_idx] = np.round(sol[integer_idx])
            best_val = node_res.value
            best_sol = sol
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, negdepth, next(counter), lo, hi, state, node_res))
            glob = min([h[0] for h in heap] + [best_val])
            out = MilpResult(MilpStatus.NODE_LIMIT, bound=float(glob), nodes=nodes,
                             message=f"node limit {node_limit} reached")
            if best_sol is not None:
                out.x, out.z, out.value = best_sol[:nx], best_sol[nx:], float(best_val)
            return out
        for side in (0, 1):
            clo, chi = lo.copy(), hi.copy()
            if side == 0:
                chi[j] = np.floor(x[j])
            else:
                clo[j] = np.ceil(x[j])
            lp.restore_state(state)
            apply_bounds(clo, chi)
            cres = lp.solve()
            nodes += 1
            if cres.status is LpStatus.OPTIMAL:
                if cres.value < best_val - _prune_tol(best_val):
                    keep_inverse = len(heap) < _KEEP_INVERSE_NODES
                    heapq.heappush(heap, (cres.value, negdepth - 1, next(counter), clo, chi,
                                          lp.copy_state(keep_inverse), cres))
            elif cres.status is LpStatus.FAILURE:
                return MilpResult(MilpStatus.FAILURE, nodes=nodes, message=f"node LP: {cres.message}")
            # child relaxations of a bounded root cannot be unbounded
    # leave the relaxation at the root bounds and basis for the next caller
    lp.restore_state(root_state)
    apply_bounds(root_lo, root_hi)
    if best_sol is None:
        return MilpResult(MilpStatus.INFEASIBLE, nodes=nodes)
    return MilpResult(MilpStatus.OPTIMAL, x=best_sol[:nx], z=best_sol[nx:], value=float(best_val),
                      bound=float(best_val), nodes=nodes)


def _prune_tol(best: float) -> float:
    return 1e-9 * (1.0 + abs(best)) if np.isfinite(best) else 0.0
