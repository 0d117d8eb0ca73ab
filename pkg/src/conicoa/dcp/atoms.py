"""Atom library: curvature, monotonicity and a conic template for each atom.

A template for an atom with arguments ``a`` (length k) is the system

    G u = H a + g,   u in K_1 x ... x K_r,   out = o . u + p . a + o0

over fresh cone coordinates ``u``. For a convex atom every feasible ``u``
gives ``out >= f(a)`` and ``witness(a)`` attains equality; for a concave atom
the inequality is reversed. The lowering instantiates one template per atom
occurrence, so each occurrence owns its own block of ``z``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..cones import ConeSpec
from .expr import Sign


class Curvature(str, enum.Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    CONVEX = "convex"
    CONCAVE = "concave"
    UNKNOWN = "unknown"

    def negate(self) -> "Curvature":
        return {Curvature.CONVEX: Curvature.CONCAVE, Curvature.CONCAVE: Curvature.CONVEX}.get(self, self)

    @property
    def is_convex(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE, Curvature.CONVEX)

    @property
    def is_concave(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE, Curvature.CONCAVE)

    @property
    def is_affine(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE)


def join(a: Curvature, b: Curvature) -> Curvature:
    """Curvature of a sum: least upper bound in Constant < Affine < {Convex, Concave} < Unknown."""
    order = [Curvature.CONSTANT, Curvature.AFFINE]
    if a in order and b in order:
        return max(a, b, key=order.index)
    if a in order:
        return b
    if b in order:
        return a
    return a if a is b else Curvature.UNKNOWN


class Monotonicity(str, enum.Enum):
    NONDECREASING = "nondecreasing"
    NONINCREASING = "nonincreasing"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Template:
    cones: tuple
    G: np.ndarray
    H: np.ndarray
    g: np.ndarray
    o: np.ndarray
    p: np.ndarray
    o0: float = 0.0

    @property
    def dim(self) -> int:
        return int(sum(c.dim for c in self.cones))


@dataclass(frozen=True)
class AtomDescriptor:
    name: str
    min_arity: int
    max_arity: int  # -1 for n-ary
    n_params: int
    curvature: Curvature
    monotonicity: Callable  # (arg signs, params) -> tuple of Monotonicity
    sign: Callable  # (arg signs, params) -> Sign
    evaluate: Callable  # (a, params) -> float
    template: Callable  # (k, params) -> Template
    witness: Callable  # (a, params) -> u

    def check(self, k: int, params: Sequence[float]):
        if k < self.min_arity or (self.max_arity >= 0 and k > self.max_arity):
            want = (f"{self.min_arity}" if self.min_arity == self.max_arity
                    else f"at least {self.min_arity}" if self.max_arity < 0
                    else f"{self.min_arity} to {self.max_arity}")
            raise ValueError(f"{self.name} takes {want} argument(s), got {k}")
        if len(params) != self.n_params:
            raise ValueError(f"{self.name} takes {self.n_params} numeric parameter(s), got {len(params)}")
        if self.name == "pow" and not params[0] >= 1.0:
            raise ValueError(f"pow needs an exponent p >= 1, got {params[0]}")

    @property
    def arity(self):
        return self.min_arity if self.min_arity == self.max_arity else None


def _rows(d, k, entries):
    """Build (G, H, g) from a list of ({u_index: coeff}, {a_index: coeff}, const)."""
    G = np.zeros((len(entries), d))
    H = np.zeros((len(entries), k))
    g = np.zeros(len(entries))
    for i, (gu, ha, c) in enumerate(entries):
        for j, v in gu.items():
            G[i, j] = v
        for j, v in ha.items():
            H[i, j] = v
        g[i] = c
    return G, H, g


def _vec(d, entries):
    v = np.zeros(d)
    for j, c in entries.items():
        v[j] = c
    return v


def _by_sign(signs, params=()):
    out = []
    for s in signs:
        if s.is_nonneg:
            out.append(Monotonicity.NONDECREASING)
        elif s.is_nonpos:
            out.append(Monotonicity.NONINCREASING)
        else:
            out.append(Monotonicity.UNKNOWN)
    return tuple(out)


def _all(m):
    return lambda signs, params=(): tuple(m for _ in signs)


def _const_sign(s):
    return lambda signs, params=(): s


def _quiet(f):
    def g(a, params=()):
        with np.errstate(all="ignore"):
            return float(f(np.asarray(a, float), params))
    return g


# templates ---------------------------------------------------------------

def _t_abs(k, params=()):
    G, H, g = _rows(2, 1, [({1: 1.0}, {0: 1.0}, 0.0)])
    return Template((ConeSpec.soc(2),), G, H, g, _vec(2, {0: 1.0}), np.zeros(1))


def _t_square(k, params=()):
    # (t + 1, 2a, t - 1) in SOC3  <=>  a^2 <= t
    G, H, g = _rows(3, 1, [({1: 1.0}, {0: 2.0}, 0.0), ({0: 1.0, 2: -1.0}, {}, 2.0)])
    return Template((ConeSpec.soc(3),), G, H, g, _vec(3, {0: 0.5, 2: 0.5}), np.zeros(1))


def _t_sqrt(k, params=()):
    # (a + 1, a - 1, 2w) in SOC3  <=>  |w| <= sqrt(a)
    G, H, g = _rows(3, 1, [({0: 1.0}, {0: 1.0}, 1.0), ({1: 1.0}, {0: 1.0}, -1.0)])
    return Template((ConeSpec.soc(3),), G, H, g, _vec(3, {2: 0.5}), np.zeros(1))


def _t_norm2(k, params=()):
    G, H, g = _rows(k + 1, k, [({i + 1: 1.0}, {i: 1.0}, 0.0) for i in range(k)])
    return Template((ConeSpec.soc(k + 1),), G, H, g, _vec(k + 1, {0: 1.0}), np.zeros(k))


def _t_geomean(k, params=()):
    # (a1 + a2, a1 - a2, 2w) in SOC3  <=>  |w| <= sqrt(a1 a2), a1, a2 >= 0
    G, H, g = _rows(3, 2, [({0: 1.0}, {0: 1.0, 1: 1.0}, 0.0), ({1: 1.0}, {0: 1.0, 1: -1.0}, 0.0)])
    return Template((ConeSpec.soc(3),), G, H, g, _vec(3, {2: 0.5}), np.zeros(2))


def _t_exp(k, params=()):
    G, H, g = _rows(3, 1, [({0: 1.0}, {0: 1.0}, 0.0), ({1: 1.0}, {}, 1.0)])
    return Template((ConeSpec.exp(),), G, H, g, _vec(3, {2: 1.0}), np.zeros(1))


def _t_log(k, params=()):
    # (w, 1, a) in EXP  <=>  w <= log a
    G, H, g = _rows(3, 1, [({1: 1.0}, {}, 1.0), ({2: 1.0}, {0: 1.0}, 0.0)])
    return Template((ConeSpec.exp(),), G, H, g, _vec(3, {0: 1.0}), np.zeros(1))


def _t_entropy(k, params=()):
    # (w, a, 1) in EXP  <=>  w <= -a log a
    G, H, g = _rows(3, 1, [({1: 1.0}, {0: 1.0}, 0.0), ({2: 1.0}, {}, 1.0)])
    return Template((ConeSpec.exp(),), G, H, g, _vec(3, {0: 1.0}), np.zeros(1))


def _t_xlogx(k, params=()):
    G, H, g = _rows(3, 1, [({1: 1.0}, {0: 1.0}, 0.0), ({2: 1.0}, {}, 1.0)])
    return Template((ConeSpec.exp(),), G, H, g, _vec(3, {0: -1.0}), np.zeros(1))


def _t_pow(k, params):
    p = params[0]
    if p == 1.0:
        return _t_abs(k)
    # (t, 1, a) in POW(1/p)  <=>  |a| <= t^(1/p)
    G, H, g = _rows(3, 1, [({1: 1.0}, {}, 1.0), ({2: 1.0}, {0: 1.0}, 0.0)])
    return Template((ConeSpec.pow(1.0 / p),), G, H, g, _vec(3, {0: 1.0}), np.zeros(1))


def _t_max(k, params=()):
    # out = a1 + s1 = ai + si, s >= 0
    G, H, g = _rows(k, k, [({0: 1.0, i: -1.0}, {i: 1.0, 0: -1.0}, 0.0) for i in range(1, k)])
    return Template((ConeSpec.nonneg(k),), G, H, g, _vec(k, {0: 1.0}), _vec(k, {0: 1.0}))


def _t_min(k, params=()):
    G, H, g = _rows(k, k, [({0: -1.0, i: 1.0}, {i: 1.0, 0: -1.0}, 0.0) for i in range(1, k)])
    return Template((ConeSpec.nonneg(k),), G, H, g, _vec(k, {0: -1.0}), _vec(k, {0: 1.0}))


# witnesses ---------------------------------------------------------------

def _xlogx(a):
    return 0.0 if a == 0 else a * np.log(a)


def _w_pow(a, params):
    if params[0] == 1.0:
        return np.array([abs(a[0]), a[0]])
    return np.array([abs(a[0]) ** params[0], 1.0, a[0]])


_WITNESS = {
    "abs": lambda a, params=(): np.array([abs(a[0]), a[0]]),
    "square": lambda a, params=(): np.array([a[0] ** 2 + 1.0, 2.0 * a[0], a[0] ** 2 - 1.0]),
    "sqrt": lambda a, params=(): np.array([a[0] + 1.0, a[0] - 1.0, 2.0 * np.sqrt(max(a[0], 0.0))]),
    "norm2": lambda a, params=(): np.concatenate([[np.linalg.norm(a)], a]),
    "geomean": lambda a, params=(): np.array([a[0] + a[1], a[0] - a[1],
                                              2.0 * np.sqrt(max(a[0] * a[1], 0.0))]),
    "exp": lambda a, params=(): np.array([a[0], 1.0, np.exp(a[0])]),
    "log": lambda a, params=(): np.array([np.log(a[0]), 1.0, a[0]]),
    "entropy": lambda a, params=(): np.array([-_xlogx(a[0]), a[0], 1.0]),
    "xlogx": lambda a, params=(): np.array([-_xlogx(a[0]), a[0], 1.0]),
    "pow": _w_pow,
    "max": lambda a, params=(): np.max(a) - np.asarray(a, float),
    "min": lambda a, params=(): np.asarray(a, float) - np.min(a),
}


def _max_sign(signs, params=()):
    if any(s.is_nonneg for s in signs):
        return Sign.NONNEG
    return Sign.NONPOS if all(s.is_nonpos for s in signs) else Sign.UNKNOWN


def _min_sign(signs, params=()):
    if any(s.is_nonpos for s in signs):
        return Sign.NONPOS
    return Sign.NONNEG if all(s.is_nonneg for s in signs) else Sign.UNKNOWN


_ND, _NI, _UK = Monotonicity.NONDECREASING, Monotonicity.NONINCREASING, Monotonicity.UNKNOWN
_CVX, _CCV = Curvature.CONVEX, Curvature.CONCAVE

_LIBRARY = {}


def _register(name, lo, hi, n_params, curv, mono, sign, evaluate, template):
    _LIBRARY[name] = AtomDescriptor(name, lo, hi, n_params, curv, mono, sign, _quiet(evaluate),
                                    template, _WITNESS[name])


_register("abs", 1, 1, 0, _CVX, _by_sign, _const_sign(Sign.NONNEG),
          lambda a, p: abs(a[0]), _t_abs)
_register("square", 1, 1, 0, _CVX, _by_sign, _const_sign(Sign.NONNEG),
          lambda a, p: a[0] ** 2, _t_square)
_register("sqrt", 1, 1, 0, _CCV, _all(_ND), _const_sign(Sign.NONNEG),
          lambda a, p: np.sqrt(a[0]), _t_sqrt)
_register("norm2", 1, -1, 0, _CVX, _by_sign, _const_sign(Sign.NONNEG),
          lambda a, p: np.linalg.norm(a), _t_norm2)
_register("geomean", 2, 2, 0, _CCV, _all(_ND), _const_sign(Sign.NONNEG),
          lambda a, p: np.sqrt(a[0] * a[1]) if a[0] >= 0 and a[1] >= 0 else np.nan, _t_geomean)
_register("exp", 1, 1, 0, _CVX, _all(_ND), _const_sign(Sign.NONNEG),
          lambda a, p: np.exp(a[0]), _t_exp)
_register("log", 1, 1, 0, _CCV, _all(_ND), _const_sign(Sign.UNKNOWN),
          lambda a, p: np.log(a[0]), _t_log)
_register("entropy", 1, 1, 0, _CCV, _all(_UK), _const_sign(Sign.UNKNOWN),
          lambda a, p: -_xlogx(a[0]) if a[0] >= 0 else np.nan, _t_entropy)
_register("xlogx", 1, 1, 0, _CVX, _all(_UK), _const_sign(Sign.UNKNOWN),
          lambda a, p: _xlogx(a[0]) if a[0] >= 0 else np.nan, _t_xlogx)
_register("pow", 1, 1, 1, _CVX, _by_sign, _const_sign(Sign.NONNEG),
          lambda a, p: abs(a[0]) ** p[0], _t_pow)
_register("max", 1, -1, 0, _CVX, _all(_ND), _max_sign, lambda a, p: np.max(a), _t_max)
_register("min", 1, -1, 0, _CCV, _all(_ND), _min_sign, lambda a, p: np.min(a), _t_min)


def atom_library() -> tuple:
    """All atom descriptors, in a fixed order."""
    return tuple(_LIBRARY.values())


def get_atom(name: str) -> AtomDescriptor:
    try:
        return _LIBRARY[name]
    except KeyError:
        raise ValueError(f"unknown atom {name!r}") from None


def is_atom(name: str) -> bool:
    return name in _LIBRARY
