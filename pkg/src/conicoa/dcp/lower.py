"""Curvature verification and lowering of models to mixed-integer conic form.

``verify`` applies the composition rules: sums with constant weights keep
curvature (a negative weight flips it), and an atom applied to arguments is
convex if the atom is convex and every argument is affine, or convex where
the atom is nondecreasing in it, or concave where it is nonincreasing; the
concave case mirrors this. Products of two non-constant factors, division by
a non-constant, and every other combination are Unknown.

``lower`` turns an accepted model into a :class:`~conicoa.oa.ConicProblem`.
Each subexpression is reduced to an affine form in the integer variables and
the conic coordinates; every atom occurrence adds one template block, its
output being an upper bound (convex) or lower bound (concave) that the
surrounding monotone context only ever pushes towards equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from ..cones import ConeProduct, ConeSpec
from ..oa import ConicProblem
from .atoms import Curvature, Monotonicity, join
from .expr import (Atom, Domain, Expression, Model, Op, Sign, Variable, add_signs, const,
                   mul_signs, sign_of_value)


class DcpError(ValueError):
    """Model rejected by the composition rules or otherwise not lowerable."""

    def __init__(self, message: str, subtree: Optional[Expression] = None):
        if subtree is not None:
            message = f"{message}: {subtree}"
        super().__init__(message)
        self.subtree = subtree


# sign and curvature ------------------------------------------------------

def sign(e: Expression) -> Sign:
    c = const(e)
    if c is not None:
        return sign_of_value(c)
    if isinstance(e, Variable):
        return e.sign
    if isinstance(e, Op):
        s = [sign(a) for a in e.args]
        if e.op == "+":
            out = Sign.ZERO
            for x in s:
                out = add_signs(out, x)
            return out
        if e.op == "-":
            return s[0].flip() if len(s) == 1 else add_signs(s[0], s[1].flip())
        if e.op == "*":
            out = Sign.NONNEG
            for x in s:
                out = mul_signs(out, x)
            return out
        return mul_signs(s[0], s[1])
    return e.descriptor.sign([sign(a) for a in e.args], e.params)


def _scaled(args):
    """Split a product into (constant factor, the non-constant factor or None); None if bilinear."""
    scale, rest = 1.0, None
    for a in args:
        c = const(a)
        if c is not None:
            scale *= c
        elif rest is None:
            rest = a
        else:
            return None
    return scale, rest


def verify(e: Expression) -> Curvature:
    """Curvature derived by the composition rules; Unknown means rejected."""
    if const(e) is not None:
        return Curvature.CONSTANT
    if isinstance(e, Variable):
        return Curvature.AFFINE
    if isinstance(e, Op):
        if e.op == "+":
            out = Curvature.CONSTANT
            for a in e.args:
                out = join(out, verify(a))
            return out
        if e.op == "-":
            if len(e.args) == 1:
                return verify(e.args[0]).negate()
            return join(verify(e.args[0]), verify(e.args[1]).negate())
        if e.op == "*":
            split = _scaled(e.args)
            if split is None:
                return Curvature.UNKNOWN
            scale, rest = split
            cv = verify(rest)
            return Curvature.CONSTANT if scale == 0 else cv if scale > 0 else cv.negate()
        c = const(e.args[1])
        if c is None or c == 0:
            return Curvature.UNKNOWN
        cv = verify(e.args[0])
        return cv if c > 0 else cv.negate()
    return _atom_curvature(e)


def _atom_curvature(e: Atom) -> Curvature:
    d = e.descriptor
    curv = [verify(a) for a in e.args]
    if Curvature.UNKNOWN in curv:
        return Curvature.UNKNOWN
    mono = d.monotonicity([sign(a) for a in e.args], e.params)
    for cv, m in zip(curv, mono):
        if not _arg_ok(d.curvature, cv, m):
            return Curvature.UNKNOWN
    return d.curvature


def _arg_ok(atom_curv: Curvature, cv: Curvature, m: Monotonicity) -> bool:
    if cv.is_affine:
        return True
    if atom_curv is Curvature.CONVEX:
        return ((m is Monotonicity.NONDECREASING and cv is Curvature.CONVEX)
                or (m is Monotonicity.NONINCREASING and cv is Curvature.CONCAVE))
    if atom_curv is Curvature.CONCAVE:
        return ((m is Monotonicity.NONDECREASING and cv is Curvature.CONCAVE)
                or (m is Monotonicity.NONINCREASING and cv is Curvature.CONVEX))
    return False


def find_unknown(e: Expression) -> Optional[Expression]:
    """The smallest subtree whose curvature is Unknown, or None."""
    if verify(e) is not Curvature.UNKNOWN:
        return None
    for c in e.children:
        bad = find_unknown(c)
        if bad is not None:
            return bad
    return e


def constraint_curvature(c) -> Curvature:
    """Curvature of ``lhs - rhs`` for ``<=``/``=`` (``rhs - lhs`` for ``>=``)."""
    diff = Op("-", (c.rhs, c.lhs)) if c.kind == ">=" else Op("-", (c.lhs, c.rhs))
    return verify(diff)


def constraint_accepted(c) -> bool:
    cv = constraint_curvature(c)
    return cv.is_affine if c.kind == "=" else cv.is_convex


# affine forms ------------------------------------------------------------

@dataclass
class _Lin:
    """``sum_j x_coef[j] x_j + sum_k z_coef[k] z_k + const`` over builder columns."""

    x: Dict[int, float] = field(default_factory=dict)
    z: Dict[int, float] = field(default_factory=dict)
    c: float = 0.0

    def scaled(self, s: float) -> "_Lin":
        return _Lin({k: s * v for k, v in self.x.items()}, {k: s * v for k, v in self.z.items()}, s * self.c)

    def plus(self, other: "_Lin", s: float = 1.0) -> "_Lin":
        out = _Lin(dict(self.x), dict(self.z), self.c + s * other.c)
        for k, v in other.x.items():
            out.x[k] = out.x.get(k, 0.0) + s * v
        for k, v in other.z.items():
            out.z[k] = out.z.get(k, 0.0) + s * v
        return out

    def value(self, xv, zv) -> float:
        return (self.c + sum(v * xv[k] for k, v in self.x.items())
                + sum(v * zv[k] for k, v in self.z.items()))


@dataclass
class _Group:
    spec: Optional[ConeSpec]  # None: scalar pooled into the shared NonNeg factor
    cols: list
    fill: Callable  # (x values, z values so far) -> values for cols


class _Builder:
    def __init__(self, model: Model):
        self.model = model
        self.ints = {v.name: j for j, v in enumerate(model.integers())}
        self.ncols = 0
        self.groups: List[_Group] = []
        self.rows: List[tuple] = []  # (_Lin, rhs) meaning lin == rhs
        self.var_cols: Dict[str, tuple] = {}
        for v in model.variables:
            if v.domain is Domain.NONNEG:
                (k,) = self._pool(lambda xv, zv, n=v.name: [self._env[n]])
                self.var_cols[v.name] = (k,)
            elif v.domain is Domain.REAL:
                kp, = self._pool(lambda xv, zv, n=v.name: [max(self._env[n], 0.0)])
                km, = self._pool(lambda xv, zv, n=v.name: [max(-self._env[n], 0.0)])
                self.var_cols[v.name] = (kp, km)
        self._env: dict = {}

    def _alloc(self, n):
        cols = list(range(self.ncols, self.ncols + n))
        self.ncols += n
        return cols

    def _pool(self, fill):
        cols = self._alloc(1)
        self.groups.append(_Group(None, cols, fill))
        return cols

    def _block(self, specs, fill):
        cols = self._alloc(sum(s.dim for s in specs))
        pos = 0
        per = []
        for s in specs:
            per.append(_Group(s, cols[pos:pos + s.dim], None))
            pos += s.dim
        # one fill for the whole template, split across its factors
        if len(per) == 1:
            per[0].fill = fill
        else:
            offs = np.cumsum([0] + [s.dim for s in specs])
            for i, g in enumerate(per):
                g.fill = (lambda xv, zv, a=offs[i], b=offs[i + 1]: np.asarray(fill(xv, zv))[a:b])
        self.groups.extend(per)
        return cols

    # expressions -----------------------------------------------------
    def lin(self, e: Expression) -> _Lin:
        c = const(e)
        if c is not None:
            return _Lin(c=c)
        if isinstance(e, Variable):
            if e.domain is Domain.INT:
                return _Lin(x={self.ints[e.name]: 1.0})
            cols = self.var_cols[e.name]
            return _Lin(z={cols[0]: 1.0}) if len(cols) == 1 else _Lin(z={cols[0]: 1.0, cols[1]: -1.0})
        if isinstance(e, Op):
            if e.op == "+":
                out = _Lin()
                for a in e.args:
                    out = out.plus(self.lin(a))
                return out
            if e.op == "-":
                if len(e.args) == 1:
                    return self.lin(e.args[0]).scaled(-1.0)
                return self.lin(e.args[0]).plus(self.lin(e.args[1]), -1.0)
            if e.op == "*":
                split = _scaled(e.args)
                if split is None:
                    raise DcpError("product of non-constant factors", e)
                scale, rest = split
                return self.lin(rest).scaled(scale)
            return self.lin(e.args[0]).scaled(1.0 / const(e.args[1]))
        return self._atom(e)

    def _atom(self, e: Atom) -> _Lin:
        d = e.descriptor
        args = [self.lin(a) for a in e.args]
        t = d.template(len(args), e.params)

        def fill(xv, zv, args=args, d=d, params=e.params):
            a = np.array([arg.value(xv, zv) for arg in args])
            return d.witness(a, params)

        cols = self._block(t.cones, fill)
        for i in range(t.G.shape[0]):
            row = _Lin({}, {cols[j]: t.G[i, j] for j in np.flatnonzero(t.G[i])}, 0.0)
            for j in np.flatnonzero(t.H[i]):
                row = row.plus(args[j], -t.H[i, j])
            # G u - H a = g; the constants of the arguments move to the right
            self.rows.append((_Lin(row.x, row.z), t.g[i] - row.c))
        out = _Lin({}, {cols[j]: t.o[j] for j in np.flatnonzero(t.o)}, t.o0)
        for j in np.flatnonzero(t.p):
            out = out.plus(args[j], t.p[j])
        return out

    def add_le(self, lin: _Lin):
        """Impose ``lin <= 0`` through a pooled slack: lin + s = 0."""
        (k,) = self._pool(lambda xv, zv, lin=lin: [max(-lin.value(xv, zv), 0.0)])
        row = lin.plus(_Lin(z={k: 1.0}))
        self.rows.append((_Lin(row.x, row.z), -row.c))

    def add_eq(self, lin: _Lin):
        self.rows.append((_Lin(lin.x, lin.z), -lin.c))


@dataclass
class LoweredModel:
    """A lowered model with the maps needed to move points between the two forms.

    The model objective equals ``problem.reported(c . z)`` at corresponding
    points.
    """

    problem: ConicProblem
    model: Model
    int_names: tuple
    var_cols: dict
    perm: np.ndarray  # builder column -> position in z
    _builder: _Builder = field(repr=False)

    def objective(self, conic_value: float) -> float:
        return self.problem.reported(conic_value)

    def recover(self, x, z) -> dict:
        """Original variable values from a point of the lowered problem."""
        env = {n: float(v) for n, v in zip(self.int_names, x)}
        for name, cols in self.var_cols.items():
            vals = [float(z[self.perm[k]]) for k in cols]
            env[name] = vals[0] if len(vals) == 1 else vals[0] - vals[1]
        return env

    def lift(self, env) -> tuple:
        """A feasible point of the lowered problem above an original point ``env``.

        Every atom occurrence is evaluated bottom-up, so its cone block sits on
        the boundary of its template.
        """
        b = self._builder
        b._env = dict(env)
        xv = np.array([float(env[n]) for n in self.int_names])
        zv = np.zeros(b.ncols)
        for g in b.groups:
            zv[g.cols] = g.fill(xv, zv)
        z = np.zeros(b.ncols)
        z[self.perm] = zv
        return xv, z


def lower(model: Model) -> LoweredModel:
    """Emit the extended conic formulation of a DCP-compliant model.

    Raises
    ------
    DcpError
        If the objective or a constraint fails the composition rules, naming
        the smallest offending subtree.
    """
    obj = model.objective
    cv = verify(obj)
    want = Curvature.CONVEX if model.sense == "minimize" else Curvature.CONCAVE
    ok = cv.is_convex if want is Curvature.CONVEX else cv.is_concave
    if not ok:
        bad = find_unknown(obj) or obj
        raise DcpError(f"objective is {cv.value}, cannot {model.sense}", bad)
    for c in model.constraints:
        if not constraint_accepted(c):
            diff = Op("-", (c.rhs, c.lhs)) if c.kind == ">=" else Op("-", (c.lhs, c.rhs))
            bad = find_unknown(diff)
            curv = constraint_curvature(c)
            raise DcpError(f"constraint {c.kind} has {curv.value} curvature", bad or diff)

    b = _Builder(model)
    sgn = 1.0 if model.sense == "minimize" else -1.0
    obj_lin = b.lin(obj).scaled(sgn)
    for c in model.constraints:
        lhs, rhs = (c.rhs, c.lhs) if c.kind == ">=" else (c.lhs, c.rhs)
        lin = b.lin(lhs).plus(b.lin(rhs), -1.0)
        if c.kind == "=":
            b.add_eq(lin)
        else:
            b.add_le(lin)

    ints = model.integers()
    L = np.array([v.lo for v in ints], float)
    U = np.array([v.hi for v in ints], float)
    offset = obj_lin.c
    if obj_lin.x:
        # integer part of the objective: a shifted copy w = g.x - min_box(g.x) >= 0
        g = np.zeros(len(ints))
        for j, v in obj_lin.x.items():
            g[j] = v
        shift = float(np.minimum(g * L, g * U).sum())
        gl = _Lin(dict(obj_lin.x), {}, -shift)
        (k,) = b._pool(lambda xv, zv, gl=gl: [max(gl.value(xv, zv), 0.0)])
        b.rows.append((_Lin(dict(obj_lin.x), {k: -1.0}), shift))
        obj_z = dict(obj_lin.z)
        obj_z[k] = obj_z.get(k, 0.0) + 1.0
        offset += shift
    else:
        obj_z = obj_lin.z

    # nonlinear factors first, in creation order, then one NonNeg factor for all pooled scalars
    order, specs = [], []
    for g in b.groups:
        if g.spec is not None:
            order.extend(g.cols)
            specs.append(g.spec)
    pooled = [k for g in b.groups if g.spec is None for k in g.cols]
    order.extend(pooled)
    if pooled:
        specs.append(ConeSpec.nonneg(len(pooled)))
    perm = np.empty(b.ncols, dtype=int)
    perm[np.array(order, dtype=int)] = np.arange(b.ncols)

    m, n = len(b.rows), len(ints)
    Ax = sp.lil_matrix((m, n))
    Az = sp.lil_matrix((m, b.ncols))
    rhs = np.zeros(m)
    for i, (lin, r) in enumerate(b.rows):
        for j, v in lin.x.items():
            if v != 0:
                Ax[i, j] += v
        for k, v in lin.z.items():
            if v != 0:
                Az[i, perm[k]] += v
        rhs[i] = r
    cvec = np.zeros(b.ncols)
    for k, v in obj_z.items():
        cvec[perm[k]] += v
    problem = ConicProblem(cvec, Ax.tocsr(), Az.tocsr(), rhs, L, U, ConeProduct(tuple(specs)),
                           offset=offset, sign=sgn)
    return LoweredModel(problem, model, tuple(v.name for v in ints), dict(b.var_cols),
                        perm, b)
