"""Immutable expression trees for disciplined convex models.

Nodes mirror the model grammar one to one, so printing a tree and parsing it
back gives an equal tree:

* :class:`Variable` and :class:`Constant` are leaves,
* :class:`Op` is ``+``, ``-``, ``*`` or ``/`` over child expressions (an
  affine combination whenever every product has at most one non-constant
  factor and every divisor is constant),
* :class:`Atom` applies a library function, with trailing numeric parameters
  such as the exponent of ``pow``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np


class Domain(str, enum.Enum):
    REAL = "real"
    NONNEG = "nonneg"
    INT = "int"


class Sign(str, enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    NONPOS = "nonpos"
    UNKNOWN = "unknown"

    def flip(self) -> "Sign":
        return {Sign.NONNEG: Sign.NONPOS, Sign.NONPOS: Sign.NONNEG}.get(self, self)

    @property
    def is_nonneg(self) -> bool:
        return self in (Sign.ZERO, Sign.NONNEG)

    @property
    def is_nonpos(self) -> bool:
        return self in (Sign.ZERO, Sign.NONPOS)


def sign_of_value(v: float) -> Sign:
    if v == 0:
        return Sign.ZERO
    return Sign.NONNEG if v > 0 else Sign.NONPOS


def add_signs(a: Sign, b: Sign) -> Sign:
    if a is Sign.ZERO:
        return b
    if b is Sign.ZERO:
        return a
    if a is b:
        return a
    return Sign.UNKNOWN


def mul_signs(a: Sign, b: Sign) -> Sign:
    if Sign.ZERO in (a, b):
        return Sign.ZERO
    if Sign.UNKNOWN in (a, b):
        return Sign.UNKNOWN
    return Sign.NONNEG if a is b else Sign.NONPOS


class Expression:
    """Base class; subclasses are frozen dataclasses."""

    def evaluate(self, env: Mapping[str, float]) -> float:
        raise NotImplementedError

    def variables(self) -> list:
        seen: dict = {}
        stack = [self]
        while stack:
            e = stack.pop()
            if isinstance(e, Variable):
                seen.setdefault(e.name, e)
            else:
                stack.extend(reversed(e.children))
        return list(seen.values())

    @property
    def children(self) -> tuple:
        return ()

    def __str__(self):
        from ..io import format_expression
        return format_expression(self)


@dataclass(frozen=True)
class Variable(Expression):
    name: str
    domain: Domain = Domain.REAL
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.domain is Domain.INT:
            if self.lo is None or self.hi is None or not (math.isfinite(self.lo) and math.isfinite(self.hi)):
                raise ValueError(f"integer variable {self.name} needs finite bounds")
            if self.lo > self.hi:
                raise ValueError(f"integer variable {self.name} has empty range [{self.lo}, {self.hi}]")

    def evaluate(self, env):
        return float(env[self.name])

    @property
    def sign(self) -> Sign:
        if self.domain is Domain.NONNEG:
            return Sign.NONNEG
        if self.domain is Domain.INT:
            if self.lo == 0 and self.hi == 0:
                return Sign.ZERO
            if self.lo >= 0:
                return Sign.NONNEG
            if self.hi <= 0:
                return Sign.NONPOS
        return Sign.UNKNOWN


@dataclass(frozen=True)
class Constant(Expression):
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError("constants must be finite")
        object.__setattr__(self, "value", v)

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Op(Expression):
    """Arithmetic node: ``+`` (n-ary), ``-`` (unary or binary), ``*`` (n-ary), ``/`` (binary)."""

    op: str
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        n = len(self.args)
        ok = {"+": n >= 1, "-": n in (1, 2), "*": n >= 1, "/": n == 2}
        if self.op not in ok:
            raise ValueError(f"unknown operator {self.op!r}")
        if not ok[self.op]:
            raise ValueError(f"operator {self.op} does not take {n} arguments")

    @property
    def children(self):
        return self.args

    def evaluate(self, env):
        vals = [a.evaluate(env) for a in self.args]
        if self.op == "+":
            return float(sum(vals))
        if self.op == "-":
            return -vals[0] if len(vals) == 1 else vals[0] - vals[1]
        if self.op == "*":
            return float(np.prod(vals))
        return vals[0] / vals[1]


@dataclass(frozen=True)
class Atom(Expression):
    name: str
    args: tuple
    params: tuple = ()

    def __post_init__(self):
        from .atoms import get_atom
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        get_atom(self.name).check(len(self.args), self.params)

    @property
    def children(self):
        return self.args

    @property
    def descriptor(self):
        from .atoms import get_atom
        return get_atom(self.name)

    def evaluate(self, env):
        return float(self.descriptor.evaluate(np.array([a.evaluate(env) for a in self.args]), self.params))


def const(e: Expression) -> Optional[float]:
    """The value of a variable-free subtree, else None."""
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Variable):
        return None
    if all(const(c) is not None for c in e.children):
        return e.evaluate({})
    return None


@dataclass(frozen=True)
class Constraint:
    kind: str  # "<=", ">=" or "="
    lhs: Expression
    rhs: Expression

    def __post_init__(self):
        if self.kind not in ("<=", ">=", "="):
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    def violation(self, env) -> float:
        a, b = self.lhs.evaluate(env), self.rhs.evaluate(env)
        if self.kind == "<=":
            return max(0.0, a - b)
        if self.kind == ">=":
            return max(0.0, b - a)
        return abs(a - b)


@dataclass(frozen=True)
class Model:
    """Declarations, an objective and constraints.

    ``sense`` is ``"minimize"`` or ``"maximize"``; ``objective`` defaults to
    the constant 0.
    """

    variables: tuple
    objective: Expression = Constant(0.0)
    sense: str = "minimize"
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"unknown sense {self.sense!r}")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable declaration")
        declared = dict(zip(names, self.variables))
        for e in [self.objective] + [x for c in self.constraints for x in (c.lhs, c.rhs)]:
            for v in e.variables():
                if declared.get(v.name) != v:
                    raise ValueError(f"variable {v.name} is used but not declared as {v}")

    def integers(self) -> list:
        return [v for v in self.variables if v.domain is Domain.INT]

    def is_feasible(self, env, tol: float = 1e-6) -> bool:
        for v in self.variables:
            val = env[v.name]
            if v.domain is Domain.NONNEG and val < -tol:
                return False
            if v.domain is Domain.INT and (val < v.lo - tol or val > v.hi + tol
                                           or abs(val - round(val)) > tol):
                return False
        return all(c.violation(env) <= tol * (1.0 + abs(c.rhs.evaluate(env))) for c in self.constraints)

    def value(self, env) -> float:
        return self.objective.evaluate(env)
