"""Convex cones: membership, duals, Euclidean projections and separation.

Supported cones (all closed and convex):

* ``Zero``   -- the origin ``{0}``; its dual is the whole space.
* ``NonNeg`` -- the nonnegative orthant.
* ``SOC``    -- ``{(t, x) : ||x||_2 <= t}`` (leading coordinate is the bound).
* ``EXP``    -- ``cl{(x, y, z) : y exp(x / y) <= z, y > 0}``.
* ``POW``    -- ``{(x, y, z) : |z| <= x^a y^(1-a), x >= 0, y >= 0}``, 0 < a < 1.

Dual cones used here::

    EXP* = cl{(u, v, w) : u < 0, -u exp(v / u) <= e w}
         = {u < 0, -u exp(v/u - 1) <= w}  U  {u = 0, v >= 0, w >= 0}
    POW* = {(u, v, w) : |w| <= (u / a)^a (v / (1 - a))^(1 - a), u >= 0, v >= 0}

Everything in this module is a pure function of its arguments.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

DEFAULT_TOL = 1e-8
ROOT_TOL = 1e-10
_ROOT_MAXITER = 2000


class ConeError(ValueError):
    """Raised on malformed cone data or a dimension mismatch."""


class ProjectionError(ArithmeticError):
    """A projection root-find failed to reach the required residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class ConeTag(str, enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    EXP = "exp"
    POW = "pow"


@dataclass(frozen=True)
class ConeSpec:
    """One factor of a cone product."""

    tag: ConeTag
    dim: int
    alpha: Optional[float] = None

    def __post_init__(self):
        tag = ConeTag(self.tag)
        object.__setattr__(self, "tag", tag)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConeError(f"cone dimension must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        if tag in (ConeTag.EXP, ConeTag.POW) and self.dim != 3:
            raise ConeError(f"{tag.value} cone has dimension 3, got {self.dim}")
        if tag is ConeTag.SOC and self.dim < 2:
            raise ConeError("second-order cone needs dimension >= 2")
        if tag is ConeTag.POW:
            if self.alpha is None or not (0.0 < float(self.alpha) < 1.0):
                raise ConeError(f"alpha out of (0,1): {self.alpha!r}")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ConeError(f"alpha is only meaningful for the power cone, not {tag.value}")

    @classmethod
    def zero(cls, dim: int) -> "ConeSpec":
        return cls(ConeTag.ZERO, dim)

    @classmethod
    def nonneg(cls, dim: int) -> "ConeSpec":
        return cls(ConeTag.NONNEG, dim)

    @classmethod
    def soc(cls, dim: int) -> "ConeSpec":
        return cls(ConeTag.SOC, dim)

    @classmethod
    def exp(cls) -> "ConeSpec":
        return cls(ConeTag.EXP, 3)

    @classmethod
    def pow(cls, alpha: float) -> "ConeSpec":
        return cls(ConeTag.POW, 3, alpha)

    @property
    def is_polyhedral(self) -> bool:
        return self.tag in (ConeTag.ZERO, ConeTag.NONNEG)

    def __str__(self):
        if self.tag is ConeTag.POW:
            return f"POW({self.alpha:g})"
        if self.tag is ConeTag.EXP:
            return "EXP"
        return f"{self.tag.value.upper()}{self.dim}"


@dataclass(frozen=True)
class ConeProduct:
    """Ordered Cartesian product of cone factors over a concatenated vector."""

    factors: tuple = ()
    offsets: tuple = field(init=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        for f in factors:
            if not isinstance(f, ConeSpec):
                raise ConeError(f"not a ConeSpec: {f!r}")
        object.__setattr__(self, "factors", factors)
        offsets, pos = [], 0
        for f in factors:
            offsets.append(pos)
            pos += f.dim
        object.__setattr__(self, "offsets", tuple(offsets))

    @property
    def dim(self) -> int:
        if not self.factors:
            return 0
        return self.offsets[-1] + self.factors[-1].dim

    def __len__(self):
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.factors[i].dim)

    def blocks(self, v):
        """Yield ``(spec, v_block)`` pairs."""
        for i, spec in enumerate(self.factors):
            yield spec, v[self.block(i)]


def _check(spec: ConeSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != spec.dim:
        raise ConeError(f"{spec} expects a vector of length {spec.dim}, got shape {v.shape}")
    return v


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# membership


def _exp_member(x, y, z, tol):
    if y < -tol:
        return False
    if y > 0 and y * _safe_exp(x / y) - z <= tol:
        return True
    # closure: limit points with y = 0
    return y <= tol and x <= tol and z >= -tol


def _exp_dual_member(u, v, w, tol):
    if u > tol:
        return False
    if u < 0 and (-u) * _safe_exp(v / u - 1.0) - w <= tol:
        return True
    return u >= -tol and v >= -tol and w >= -tol


def _pow_member(x, y, z, a, tol):
    if x < -tol or y < -tol:
        return False
    return abs(z) - max(x, 0.0) ** a * max(y, 0.0) ** (1 - a) <= tol


def _pow_dual_member(u, v, w, a, tol):
    if u < -tol or v < -tol:
        return False
    return abs(w) - (max(u, 0.0) / a) ** a * (max(v, 0.0) / (1 - a)) ** (1 - a) <= tol


def member(spec: ConeSpec, v, tol: float = DEFAULT_TOL) -> bool:
    """Whether ``v`` satisfies the cone's defining inequalities up to ``tol``."""
    v = _check(spec, v)
    tag = spec.tag
    if tag is ConeTag.ZERO:
        return bool(np.all(np.abs(v) <= tol))
    if tag is ConeTag.NONNEG:
        return bool(np.all(v >= -tol))
    if tag is ConeTag.SOC:
        return bool(np.linalg.norm(v[1:]) - v[0] <= tol)
    x, y, z = (float(c) for c in v)
    if tag is ConeTag.EXP:
        if _exp_member(x, y, z, tol):
            return True
        p = _project_exp(x, y, z)
    else:
        if _pow_member(x, y, z, spec.alpha, tol):
            return True
        p = _project_pow(x, y, z, spec.alpha)
    # the power functions are not Lipschitz at the cone's edges, so fall back to distance
    return math.dist(p, (x, y, z)) <= tol


def dual_member(spec: ConeSpec, beta, tol: float = DEFAULT_TOL) -> bool:
    """Whether ``beta`` lies in the dual cone ``K*`` up to ``tol``."""
    beta = _check(spec, beta)
    tag = spec.tag
    if tag is ConeTag.ZERO:
        return True
    if tag in (ConeTag.NONNEG, ConeTag.SOC):
        return member(spec, beta, tol)
    u, v, w = (float(c) for c in beta)
    if tag is ConeTag.EXP:
        if _exp_dual_member(u, v, w, tol):
            return True
        p = _project_exp(-u, -v, -w)
    else:
        if _pow_dual_member(u, v, w, spec.alpha, tol):
            return True
        p = _project_pow(-u, -v, -w, spec.alpha)
    # distance to K* equals |P_K(-beta)| by Moreau
    return math.hypot(*p) <= tol


# ---------------------------------------------------------------------------
# projections


def _project_soc(v: np.ndarray) -> np.ndarray:
    t = v[0]
    x = v[1:]
    nx = float(np.linalg.norm(x))
    if nx <= t:
        return v.copy()
    if nx <= -t:
        return np.zeros_like(v)
    a = 0.5 * (t + nx)
    out = np.empty_like(v)
    out[0] = a
    out[1:] = (a / nx) * x
    return out


def _exp_h(r, s, t, rho):
    """Root function of the exponential-cone projection and a magnitude scale.

    Both are multiplied by ``exp(-|rho|)`` to stay finite for large ``|rho|``.
    """
    m = abs(rho)
    ep = math.exp(rho - m)
    em = math.exp(-rho - m)
    quad = rho * (rho - 1.0) + 1.0
    lin = (rho - 1.0) * r + s
    dual = r - rho * s
    tq = quad * t * math.exp(-m)
    h = lin * ep - dual * em - tq
    scale = (abs((rho - 1.0) * r) + abs(s)) * ep + (abs(r) + abs(rho * s)) * em + abs(tq)
    dh = (rho * r + s) * ep + (r - (rho - 1.0) * s) * em - (2.0 * rho - 1.0) * t * math.exp(-m)
    return h, dh, scale


# |rho| beyond this overflows rho**2; the edge candidates cover that regime
_RHO_CAP = 1e100


def _exp_root(r, s, t):
    """Find rho with h(rho) = 0 on the interval where both multipliers are positive."""
    lo = max(1.0 - s / r, -_RHO_CAP) if r > 0 else -math.inf
    hi = min(r / s, _RHO_CAP) if s > 0 else math.inf
    if lo > _RHO_CAP or hi < -_RHO_CAP:
        return None, math.inf
    if math.isinf(lo):
        step = 1.0
        lo = hi - step
        while _exp_h(r, s, t, lo)[0] >= 0:
            step *= 2.0
            lo = hi - step
            if step > 1e6:
                return None, math.inf
    if math.isinf(hi):
        step = 1.0
        hi = lo + step
        while _exp_h(r, s, t, hi)[0] <= 0:
            step *= 2.0
            hi = lo + step
            if step > 1e6:
                return None, math.inf
    if lo == hi:
        rho = lo
    elif _exp_h(r, s, t, lo)[0] > 0 or _exp_h(r, s, t, hi)[0] < 0:
        return None, math.inf
    else:
        rho = brentq(lambda x: _exp_h(r, s, t, x)[0], lo, hi,
                     xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=_ROOT_MAXITER)
    h, _, scale = _exp_h(r, s, t, rho)
    res = abs(h) / scale if scale > 0 else 0.0
    return rho, res


def _exp_viol(x, y, z):
    """Violation of the EXP inequalities; finite near the y = 0 edge."""
    edge = math.sqrt(max(x, 0.0) ** 2 + y * y + max(-z, 0.0) ** 2)
    if y > 0:
        return min(max(y * _safe_exp(x / y) - z, 0.0), edge)
    return edge


def _exp_dual_viol(u, v, w):
    edge = math.sqrt(u * u + max(-v, 0.0) ** 2 + max(-w, 0.0) ** 2)
    if u < 0:
        return min(max(-u * _safe_exp(v / u - 1.0) - w, 0.0), edge)
    return edge


def _project_exp(r, s, t):
    if _exp_member(r, s, t, 0.0):
        return (r, s, t)
    if _exp_dual_member(-r, -s, -t, 0.0):
        return (0.0, 0.0, 0.0)
    if r <= 0 and s <= 0:
        return (r, 0.0, max(t, 0.0))

    candidates = [(min(r, 0.0), 0.0, max(t, 0.0)), (0.0, 0.0, 0.0)]
    if s > 0:
        candidates.append((r, s, max(t, s * _safe_exp(r / s))))
    rho, res = _exp_root(r, s, t)
    if rho is not None:
        quad = rho * (rho - 1.0) + 1.0
        y = ((rho - 1.0) * r + s) / quad
        mu_e = (r - rho * s) / quad  # mu * exp(rho)
        if y > 0:
            candidates.append((y * rho, y, y * _safe_exp(rho)))
            # same point recovered from the dual side; better conditioned when y is tiny
            candidates.append((y * rho, y, t + mu_e * _safe_exp(-rho)))
        if mu_e > 0:
            candidates.append((r - mu_e, s - mu_e * (1.0 - rho), t + mu_e * _safe_exp(-rho)))

    nv = 1.0 + math.sqrt(r * r + s * s + t * t)
    best, best_key = None, None
    for c in candidates:
        if not all(math.isfinite(ci) for ci in c):
            continue
        q = (c[0] - r, c[1] - s, c[2] - t)
        try:
            err = (_exp_viol(*c) + _exp_dual_viol(*q)
                   + abs(c[0] * q[0] + c[1] * q[1] + c[2] * q[2]) / nv)
        except OverflowError:
            continue
        key = (err, math.hypot(*q))
        if best_key is None or key < best_key:
            best, best_key = c, key
    if best_key[0] > ROOT_TOL * nv and res > ROOT_TOL:
        raise ProjectionError("exponential cone projection did not converge", res)
    return best


def _pow_root(x, y, rh, a):
    """Solve for r = |z| of the projection; the root function decreases on [0, rh]."""

    def root_pos(b, d):
        # positive root of p^2 - b p - d/4 = 0, without cancellation for b < 0
        sq = math.sqrt(b * b + d)
        return 0.5 * (b + sq) if b >= 0 else 0.5 * d / (sq - b)

    def xy(r, s):
        # s = rh - r, passed separately so that roots near rh keep full precision
        d = 4.0 * r * s
        return root_pos(x, a * d), root_pos(y, (1 - a) * d)

    def g(r, s):
        px, py = xy(r, s)
        return px ** a * py ** (1 - a) - r

    def f(r):
        return g(r, rh - r)

    mid = 0.5 * rh
    if f(rh) >= 0:
        r, s = rh, 0.0
    elif f(mid) >= 0:
        # root in [mid, rh): solve for the complement s in (0, mid]
        s = brentq(lambda s: g(rh - s, s), 0.0, mid, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                   maxiter=_ROOT_MAXITER)
        r = rh - s
    else:
        # f(0) = 0 whenever x or y is negative; move off the trivial root
        lo = 0.0
        if f(lo) <= 0:
            lo = mid
            while lo > 1e-300 * rh and f(lo) <= 0:
                lo *= 0.5 ** 8
        if f(lo) <= 0:
            r = 0.0
        else:
            r = brentq(f, lo, mid, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=_ROOT_MAXITER)
        s = rh - r
    px, py = xy(r, s)
    res = abs(px ** a * py ** (1 - a) - r) / (1.0 + abs(x) + abs(y) + rh)
    return px, py, r, res


def _pow_viol(x, y, z, a):
    return max(-x, -y, abs(z) - max(x, 0.0) ** a * max(y, 0.0) ** (1 - a), 0.0)


def _pow_dual_viol(u, v, w, a):
    return max(-u, -v, abs(w) - (max(u, 0.0) / a) ** a * (max(v, 0.0) / (1 - a)) ** (1 - a), 0.0)


def _project_pow(x, y, z, a):
    if _pow_member(x, y, z, a, 0.0):
        return (x, y, z)
    if _pow_dual_member(-x, -y, -z, a, 0.0):
        return (0.0, 0.0, 0.0)
    # projection is positively homogeneous; solve at unit scale
    m = max(abs(x), abs(y), abs(z))
    px, py, r, res = _pow_root(x / m, y / m, abs(z) / m, a)
    p = (m * px, m * py, math.copysign(m * r, z))
    if res > ROOT_TOL:
        raise ProjectionError("power cone projection did not converge", res)
    return p


def project(spec: ConeSpec, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the cone."""
    v = _check(spec, v)
    tag = spec.tag
    if tag is ConeTag.ZERO:
        return np.zeros_like(v)
    if tag is ConeTag.NONNEG:
        return np.maximum(v, 0.0)
    if tag is ConeTag.SOC:
        return _project_soc(v)
    if tag is ConeTag.EXP:
        return np.array(_project_exp(float(v[0]), float(v[1]), float(v[2])))
    return np.array(_project_pow(float(v[0]), float(v[1]), float(v[2]), spec.alpha))


def project_dual(spec: ConeSpec, v) -> np.ndarray:
    """Projection onto ``K*`` via Moreau: ``P_K*(v) = v + P_K(-v)``."""
    v = _check(spec, v)
    if spec.tag is ConeTag.ZERO:
        return v.copy()
    if spec.tag in (ConeTag.NONNEG, ConeTag.SOC):
        return project(spec, v)
    return v + project(spec, -v)


def separate(spec: ConeSpec, v, tol: float = DEFAULT_TOL):
    """Return a unit ``beta`` in ``K*`` with ``beta . v < 0``, or None if ``v`` is in K.

    The vector is the Moreau residual ``P_K(v) - v = P_K*(-v)``.
    """
    v = _check(spec, v)
    if member(spec, v, tol):
        return None
    q = project(spec, v) - v
    nq = float(np.linalg.norm(q))
    if nq == 0.0:
        return None
    return q / nq


def interior_point(spec: ConeSpec) -> np.ndarray:
    """A fixed point in the interior of the cone (the origin for ``Zero``)."""
    tag = spec.tag
    if tag is ConeTag.ZERO:
        return np.zeros(spec.dim)
    if tag is ConeTag.NONNEG:
        return np.ones(spec.dim)
    if tag is ConeTag.SOC:
        e = np.zeros(spec.dim)
        e[0] = 1.0
        return e
    if tag is ConeTag.EXP:
        return np.array([-1.0, 1.0, 1.0])
    return np.array([1.0, 1.0, 0.0])


# ---------------------------------------------------------------------------
# whole-product helpers used by the solvers


class ProductProjector:
    """Vectorised projections onto a cone product or its dual.

    Groups polyhedral coordinates so that only the nonlinear factors are
    visited one at a time.
    """

    def __init__(self, cone: ConeProduct):
        self.cone = cone
        zero, nonneg = [], []
        self.soc, self.exp, self.pow = [], [], []
        for i, spec in enumerate(cone.factors):
            sl = cone.block(i)
            if spec.tag is ConeTag.ZERO:
                zero.extend(range(sl.start, sl.stop))
            elif spec.tag is ConeTag.NONNEG:
                nonneg.extend(range(sl.start, sl.stop))
            elif spec.tag is ConeTag.SOC:
                self.soc.append(sl)
            elif spec.tag is ConeTag.EXP:
                self.exp.append(sl.start)
            else:
                self.pow.append((sl.start, spec.alpha))
        self.zero = np.array(zero, dtype=int)
        self.nonneg = np.array(nonneg, dtype=int)

    def primal(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[self.zero] = 0.0
        out[self.nonneg] = np.maximum(v[self.nonneg], 0.0)
        for sl in self.soc:
            out[sl] = _project_soc(v[sl])
        for k in self.exp:
            out[k:k + 3] = _project_exp(float(v[k]), float(v[k + 1]), float(v[k + 2]))
        for k, a in self.pow:
            out[k:k + 3] = _project_pow(float(v[k]), float(v[k + 1]), float(v[k + 2]), a)
        return out

    def dual(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[self.nonneg] = np.maximum(v[self.nonneg], 0.0)
        for sl in self.soc:
            out[sl] = _project_soc(v[sl])
        for k in self.exp:
            p = _project_exp(-float(v[k]), -float(v[k + 1]), -float(v[k + 2]))
            out[k:k + 3] = (v[k] + p[0], v[k + 1] + p[1], v[k + 2] + p[2])
        for k, a in self.pow:
            p = _project_pow(-float(v[k]), -float(v[k + 1]), -float(v[k + 2]), a)
            out[k:k + 3] = (v[k] + p[0], v[k + 1] + p[1], v[k + 2] + p[2])
        return out


def product_member(cone: ConeProduct, v, tol: float = DEFAULT_TOL) -> bool:
    return all(member(spec, blk, tol) for spec, blk in cone.blocks(np.asarray(v, float)))


def product_dual_member(cone: ConeProduct, beta, tol: float = DEFAULT_TOL) -> bool:
    return all(dual_member(spec, blk, tol) for spec, blk in cone.blocks(np.asarray(beta, float)))


def dual_distance(cone: ConeProduct, beta) -> float:
    """Euclidean distance from ``beta`` to ``K*``."""
    beta = np.asarray(beta, float)
    return float(np.linalg.norm(beta - ProductProjector(cone).dual(beta)))


def as_product(factors: Sequence[ConeSpec] | ConeProduct) -> ConeProduct:
    if isinstance(factors, ConeProduct):
        return factors
    return ConeProduct(tuple(factors))
