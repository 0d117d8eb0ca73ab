"""Dense bounded-variable simplex.

The LP is held as

    min c.x   s.t.  rlo <= A x <= rhi,   lo <= x <= hi

and every row gets an activity variable ``s = A x`` so that all constraints
become simple bounds on ``w = (x, s)``. A basis picks ``m`` basic variables
among the ``n + m``; if ``S`` denotes the basic structural columns and ``R``
the rows whose activity is nonbasic ("tight" rows), then ``|S| = |R|`` and the
basis is nonsingular exactly when ``K = A[R, S]`` is. Only ``K`` is ever
inverted, so the cost per pivot is ``O(m n + k^3)`` with ``k <= n``; this keeps
master problems with many cut rows and few columns cheap.

The all-slack basis (``k = 0``) is always available, appended rows simply get
a basic activity, and a basis left optimal by a previous solve stays dual
feasible under bound changes, which is what branch-and-bound warm starts rely
on. A primal method (composite phase 1 on the sum of infeasibilities) and a
dual method are provided. Dantzig pricing is used until a run of degenerate
pivots is seen, after which Bland's rule takes over until the objective moves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_RUN = 30

_BASIC, _LOWER, _UPPER, _FREE, _FIXED = 0, 1, 2, 3, 4


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILURE = "failure"


@dataclass
class LpResult:
    status: LpStatus
    x: Optional[np.ndarray] = None
    value: Optional[float] = None
    y: Optional[np.ndarray] = None
    """Row multipliers: ``c = A^T y + d``."""
    d: Optional[np.ndarray] = None
    """Reduced costs of the structural columns."""
    ray: Optional[np.ndarray] = None
    """Improving direction when unbounded: ``c.ray < 0`` and the ray keeps all constraints."""
    iterations: int = 0
    message: str = ""


class SingularBasisError(ArithmeticError):
    pass


class LinearProgram:
    """A mutable LP that remembers its basis between solves.

    Parameters
    ----------
    c : (n,) array
    A : (m, n) array
    rlo, rhi : (m,) arrays
        Row activity bounds; use equal values for equality rows and infinities
        for one-sided rows.
    lo, hi : (n,) arrays
        Column bounds, possibly infinite.
    max_iters : int
        Pivot limit per call to :meth:`solve`.
    """

    def __init__(self, c, A, rlo, rhi, lo, hi, max_iters: int = 50000):
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        A = np.asarray(A, dtype=float).reshape(-1, n)
        m = A.shape[0]
        self.n, self.m = n, m
        self.c = c
        self.A = A
        self.L = np.concatenate([np.asarray(lo, float).ravel(), np.asarray(rlo, float).ravel()])
        self.U = np.concatenate([np.asarray(hi, float).ravel(), np.asarray(rhi, float).ravel()])
        if self.L.size != n + m or self.U.size != n + m:
            raise ValueError("bound vectors do not match the problem dimensions")
        self.max_iters = max_iters
        self.iterations = 0
        self._reset_basis()

    # -- basis bookkeeping ------------------------------------------------

    def _reset_basis(self):
        n, m = self.n, self.m
        self.state = np.full(n + m, _BASIC, dtype=np.int8)
        self.state[:n] = _LOWER
        self.w = np.zeros(n + m)
        self._settle_nonbasics()
        self._factor()

    def _settle_nonbasics(self):
        """Put every nonbasic at a bound consistent with the current bounds."""
        st = self.state
        L, U = self.L, self.U
        nb = st != _BASIC
        flo, fhi = np.isfinite(L), np.isfinite(U)
        up = nb & fhi & ((st == _UPPER) | ~flo)
        lo = nb & flo & ~up
        fr = nb & ~flo & ~fhi
        fx = nb & (L == U)
        st[lo] = _LOWER
        st[up] = _UPPER
        st[fr] = _FREE
        st[fx] = _FIXED
        self.w[lo] = L[lo]
        self.w[up] = U[up]
        self.w[fr] = 0.0
        self.w[fx] = L[fx]

    def _nonbasic_at(self, j, target):
        """Make ``j`` nonbasic at the bound ``target``."""
        if self.L[j] == self.U[j]:
            self.state[j] = _FIXED
        elif target == self.U[j]:
            self.state[j] = _UPPER
        elif target == self.L[j]:
            self.state[j] = _LOWER
        else:
            self.state[j] = _FREE
            target = 0.0 if not np.isfinite(target) else target
        self.w[j] = target

    def _factor(self):
        n = self.n
        self.S = np.flatnonzero(self.state[:n] == _BASIC)
        self.R = np.flatnonzero(self.state[n:] != _BASIC)
        k = self.S.size
        if self.R.size != k:
            raise SingularBasisError("basis has inconsistent dimensions")
        if k == 0:
            self.Kinv = np.zeros((0, 0))
            return
        K = self.A[np.ix_(self.R, self.S)]
        try:
            Kinv = np.linalg.inv(K)
        except np.linalg.LinAlgError as err:
            raise SingularBasisError(str(err)) from None
        if not np.all(np.isfinite(Kinv)) or np.abs(Kinv).max() > 1e12:
            raise SingularBasisError("basis is numerically singular")
        self.Kinv = Kinv

    def _compute_basics(self):
        n = self.n
        x = self.w[:n]
        xN = np.where(self.state[:n] != _BASIC, x, 0.0)
        if self.S.size:
            x[self.S] = self.Kinv @ (self.w[n + self.R] - self.A[self.R] @ xN)
        s = self.A @ x
        basic_rows = self.state[n:] == _BASIC
        self.w[n:][basic_rows] = s[basic_rows]

    def _direction(self, q):
        """Change of every variable per unit increase of nonbasic ``q``."""
        n = self.n
        dx = np.zeros(n)
        if q < n:
            dx[q] = 1.0
            if self.S.size:
                dx[self.S] = -(self.Kinv @ self.A[self.R, q])
        elif self.S.size:
            pos = np.searchsorted(self.R, q - n)
            dx[self.S] = self.Kinv[:, pos]
        dw = np.empty(n + self.m)
        dw[:n] = dx
        dw[n:] = self.A @ dx
        if q >= n:
            dw[q] = 1.0
        return dw

    def _row_weights(self, r):
        """Row multipliers ``u`` with ``d w_r / d x_j = -u.A[:, j]`` and ``d w_r / d s_i = u_i``."""
        n = self.n
        u = np.zeros(self.m)
        if r < n:
            t = np.searchsorted(self.S, r)
            u[self.R] = self.Kinv[t]
        else:
            i = r - n
            if self.S.size:
                u[self.R] = self.A[i, self.S] @ self.Kinv
            u[i] = -1.0
        return u

    def _duals(self, g):
        """Row multipliers and reduced costs for the cost vector ``g`` over ``w``."""
        n = self.n
        y = np.zeros(self.m)
        rb = self.state[n:] == _BASIC
        y[rb] = -g[n:][rb]
        if self.S.size:
            h = g[self.S] - self.A[:, self.S].T @ y
            y[self.R] = self.Kinv.T @ h
        d = np.empty(n + self.m)
        d[:n] = g[:n] - self.A.T @ y
        d[n:] = g[n:] + y
        return y, d

    # -- modification -----------------------------------------------------

    def set_bounds(self, j, lo, hi):
        """Change the bounds of structural column ``j``."""
        self.L[j] = lo
        self.U[j] = hi
        if self.state[j] != _BASIC:
            self._settle_one(j)

    def _settle_one(self, j):
        st = self.state[j]
        lo, hi = self.L[j], self.U[j]
        if lo == hi:
            self.state[j], self.w[j] = _FIXED, lo
        elif (st == _UPPER and np.isfinite(hi)) or (not np.isfinite(lo) and np.isfinite(hi)):
            self.state[j], self.w[j] = _UPPER, hi
        elif np.isfinite(lo):
            self.state[j], self.w[j] = _LOWER, lo
        else:
            self.state[j], self.w[j] = _FREE, 0.0

    def add_rows(self, rows, rlo, rhi):
        """Append rows; their activities are basic so the factorization is unchanged."""
        rows = np.asarray(rows, dtype=float).reshape(-1, self.n)
        k = rows.shape[0]
        if k == 0:
            return
        self.A = np.vstack([self.A, rows])
        self.L = np.concatenate([self.L, np.asarray(rlo, float).ravel()])
        self.U = np.concatenate([self.U, np.asarray(rhi, float).ravel()])
        self.state = np.concatenate([self.state, np.full(k, _BASIC, dtype=np.int8)])
        self.w = np.concatenate([self.w, rows @ self.w[:self.n]])
        self.m += k

    def copy_state(self, with_inverse: bool = True):
        """Snapshot of the basis, restorable with :meth:`restore_state`."""
        Kinv = self.Kinv.copy() if with_inverse else None
        return (self.state.copy(), self.w.copy(), Kinv)

    def restore_state(self, snap):
        state, w, Kinv = snap
        self.state, self.w = state.copy(), w.copy()
        self._settle_nonbasics()
        if Kinv is None:
            self._factor()
        else:
            n = self.n
            self.S = np.flatnonzero(self.state[:n] == _BASIC)
            self.R = np.flatnonzero(self.state[n:] != _BASIC)
            self.Kinv = Kinv.copy()

    # -- tests on the current point ---------------------------------------

    def _violations(self):
        bas = self.state == _BASIC
        w, L, U = self.w, self.L, self.U
        with np.errstate(invalid="ignore"):
            below = bas & (L - w > FEAS_TOL * (1 + np.abs(L)))
            above = bas & (w - U > FEAS_TOL * (1 + np.abs(U)))
        return below, above

    def _dual_feasible(self, d):
        st = self.state
        bad = ((st == _LOWER) & (d < -DUAL_TOL)) | ((st == _UPPER) & (d > DUAL_TOL)) \
            | ((st == _FREE) & (np.abs(d) > DUAL_TOL))
        return not bad.any()

    def _pivot(self, q, r, target):
        """Basic ``r`` leaves at ``target``, nonbasic ``q`` enters."""
        self.state[q] = _BASIC
        self._nonbasic_at(r, target)
        self._factor()
        self._compute_basics()

    # -- primal simplex ---------------------------------------------------

    def _primal(self) -> LpStatus:
        N = self.n + self.m
        bland = False
        degenerate = 0
        while True:
            if self.iterations >= self._limit:
                return LpStatus.FAILURE
            below, above = self._violations()
            phase1 = bool(below.any() or above.any())
            if phase1:
                g = above.astype(float) - below.astype(float)
            else:
                g = self._cost
            y, d = self._duals(g)
            st = self.state
            elig = np.zeros(N)
            m_lo, m_up, m_fr = st == _LOWER, st == _UPPER, st == _FREE
            elig[m_lo] = -d[m_lo]
            elig[m_up] = d[m_up]
            elig[m_fr] = np.abs(d[m_fr])
            cand = np.flatnonzero(elig > DUAL_TOL)
            if cand.size == 0:
                return LpStatus.INFEASIBLE if phase1 else LpStatus.OPTIMAL
            q = int(cand[0]) if bland else int(cand[np.argmax(elig[cand])])
            direction = 1.0 if d[q] < 0 else -1.0
            rate = direction * self._direction(q)
            bas = np.flatnonzero(st == _BASIC)
            rb = rate[bas]
            wb, lo, hi = self.w[bas], self.L[bas], self.U[bas]
            bl, ab = below[bas], above[bas]
            up = rb > PIVOT_TOL
            dn = rb < -PIVOT_TOL
            # feasible basics stop at their bounds, infeasible ones at the bound they approach
            lim = np.where(up, np.where(bl, lo, hi), np.where(ab, hi, lo))
            away = (bl & dn) | (ab & up)
            mv = (up | dn) & ~away & np.isfinite(lim)
            idx = np.flatnonzero(mv)
            span = self.U[q] - self.L[q]
            if idx.size == 0:
                if not np.isfinite(span):
                    if phase1:
                        return LpStatus.FAILURE
                    self._ray = rate
                    return LpStatus.UNBOUNDED
                r, step = -1, span
            else:
                tol = FEAS_TOL * (1 + np.abs(lim[idx]))
                ratio = np.maximum((lim[idx] - wb[idx]) / rb[idx], 0.0)
                relaxed = (lim[idx] + np.sign(rb[idx]) * tol - wb[idx]) / rb[idx]
                if bland:
                    tmin = ratio.min()
                    ties = idx[ratio <= tmin + 1e-12]
                    r_loc = ties[np.argmin(bas[ties])]
                    step = tmin
                else:
                    pick = np.flatnonzero(ratio <= relaxed.min())
                    k = pick[np.argmax(np.abs(rb[idx[pick]]))]
                    r_loc, step = idx[k], ratio[k]
                r = int(bas[r_loc])
                if span <= step:
                    r, step = -1, span
            self.iterations += 1
            if step <= 1e-12:
                degenerate += 1
                bland = bland or degenerate >= DEGENERATE_RUN
            else:
                degenerate = 0
                bland = False
            if r < 0:
                self._nonbasic_at(q, self.U[q] if direction > 0 else self.L[q])
                self._compute_basics()
                continue
            self.w[q] += direction * step
            self._pivot(q, r, lim[r_loc])

    # -- dual simplex -----------------------------------------------------

    def _dual(self) -> LpStatus:
        """Dual simplex from a dual feasible basis; FAILURE asks the caller for the primal."""
        degenerate = 0
        n = self.n
        while True:
            if self.iterations >= self._limit:
                return LpStatus.FAILURE
            below, above = self._violations()
            bad = below | above
            if not bad.any():
                return LpStatus.OPTIMAL
            viol = np.where(below, self.L - self.w, 0.0) + np.where(above, self.w - self.U, 0.0)
            cand_r = np.flatnonzero(bad)
            r = int(cand_r[0]) if degenerate >= DEGENERATE_RUN else int(cand_r[np.argmax(viol[cand_r])])
            to_lower = bool(below[r])
            bound = self.L[r] if to_lower else self.U[r]
            _, d = self._duals(self._cost)
            u = self._row_weights(r)
            grad = np.empty(n + self.m)
            grad[:n] = -(u @ self.A)
            grad[n:] = u
            # a > 0 means raising w_j moves w_r towards its bound
            a = grad if to_lower else -grad
            st = self.state
            cand = ((st == _LOWER) & (a > PIVOT_TOL)) | ((st == _UPPER) & (a < -PIVOT_TOL)) \
                | ((st == _FREE) & (np.abs(a) > PIVOT_TOL))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                self._farkas_ok = self._row_infeasible(grad, r, to_lower, bound)
                return LpStatus.INFEASIBLE
            aj = a[idx]
            dj = np.maximum(d[idx] * np.sign(aj), 0.0)
            free = st[idx] == _FREE
            ratio = np.where(free, 0.0, dj / np.abs(aj))
            relaxed = np.where(free, 0.0, (dj + DUAL_TOL) / np.abs(aj))
            if degenerate >= DEGENERATE_RUN:
                pool = np.flatnonzero(ratio <= ratio.min() + 1e-12)
                k = pool[np.argmin(idx[pool])]
            else:
                pool = np.flatnonzero(ratio <= relaxed.min())
                k = pool[np.argmax(np.abs(aj[pool]))]
            q = int(idx[k])
            self.iterations += 1
            degenerate = degenerate + 1 if ratio[k] <= 1e-12 else 0
            self.w[q] += (bound - self.w[r]) / grad[q]
            self._pivot(q, r, bound)

    def _row_infeasible(self, grad, r, to_lower, bound) -> bool:
        """Certify that no choice of nonbasic values within bounds brings ``w_r`` to ``bound``."""
        nb = self.state != _BASIC
        a = grad[nb] if to_lower else -grad[nb]
        L, U, w = self.L[nb], self.U[nb], self.w[nb]
        act = a != 0
        pick = np.where(a > 0, U, L)[act]
        if not np.all(np.isfinite(pick)):
            return False
        best = float(a[act] @ (pick - w[act]))
        gap = (bound - self.w[r]) if to_lower else (self.w[r] - bound)
        return best < gap - 10 * FEAS_TOL * (1.0 + abs(bound))

    # -- driver ------------------------------------------------------------

    def solve(self, c=None) -> LpResult:
        """Solve from the current basis (warm start)."""
        if c is not None:
            self.c = np.asarray(c, dtype=float).ravel()
        self._cost = np.concatenate([self.c, np.zeros(self.m)])
        self._ray = None
        self._farkas_ok = False
        start = self.iterations
        self._limit = start + self.max_iters
        if np.any(self.L > self.U + FEAS_TOL):
            return LpResult(LpStatus.INFEASIBLE, message="crossed bounds")
        status = LpStatus.FAILURE
        for attempt in range(3):
            try:
                if attempt == 1:
                    self._factor()
                elif attempt == 2:
                    self._reset_basis()
                self._compute_basics()
                below, above = self._violations()
                if below.any() or above.any():
                    _, d = self._duals(self._cost)
                    if self._dual_feasible(d):
                        status = self._dual()
                        if status is LpStatus.OPTIMAL:
                            _, d = self._duals(self._cost)
                            if not self._dual_feasible(d):
                                status = self._primal()  # tolerance drift
                        elif status is LpStatus.INFEASIBLE and not self._farkas_ok:
                            status = self._primal()
                    else:
                        status = self._primal()
                else:
                    status = self._primal()
            except SingularBasisError:
                status = LpStatus.FAILURE
            if status is not LpStatus.FAILURE or self.iterations >= self._limit:
                break
        its = self.iterations - start
        if status is LpStatus.OPTIMAL:
            y, d = self._duals(self._cost)
            x = self.w[:self.n].copy()
            return LpResult(status, x=x, value=float(self.c @ x), y=y, d=d[:self.n], iterations=its)
        if status is LpStatus.UNBOUNDED:
            return LpResult(status, x=self.w[:self.n].copy(), ray=self._ray[:self.n].copy(),
                            value=-np.inf, iterations=its)
        if status is LpStatus.INFEASIBLE:
            return LpResult(status, iterations=its)
        msg = "iteration limit" if self.iterations >= self._limit else "numerical difficulties"
        return LpResult(status, iterations=its, message=msg)


def solve_lp(c, A=None, rlo=None, rhi=None, lo=None, hi=None, A_eq=None, b_eq=None,
             A_ub=None, b_ub=None, max_iters: int = 50000) -> LpResult:
    """One-shot LP solve.

    Rows may be given as activity bounds ``rlo <= A x <= rhi`` and/or in the
    familiar ``A_eq x = b_eq``, ``A_ub x <= b_ub`` form. Missing column bounds
    default to ``x >= 0``.

    Examples
    --------
    >>> r = solve_lp([-1, -1], A_ub=[[1, 1]], b_ub=[1.5], lo=[0, 0], hi=[1, 1])
    >>> r.status.value, round(-r.value, 6)
    ('optimal', 1.5)
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    blocks, los, his = [], [], []
    if A is not None:
        blocks.append(np.asarray(A, float).reshape(-1, n))
        los.append(np.asarray(rlo, float).ravel())
        his.append(np.asarray(rhi, float).ravel())
    if A_eq is not None:
        b = np.asarray(b_eq, float).ravel()
        blocks.append(np.asarray(A_eq, float).reshape(-1, n))
        los.append(b)
        his.append(b)
    if A_ub is not None:
        b = np.asarray(b_ub, float).ravel()
        blocks.append(np.asarray(A_ub, float).reshape(-1, n))
        los.append(np.full(b.size, -np.inf))
        his.append(b)
    A_all = np.vstack(blocks) if blocks else np.zeros((0, n))
    rl = np.concatenate(los) if los else np.zeros(0)
    rh = np.concatenate(his) if his else np.zeros(0)
    lo = np.zeros(n) if lo is None else np.asarray(lo, float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, float)
    return LinearProgram(c, A_all, rl, rh, lo, hi, max_iters=max_iters).solve()
