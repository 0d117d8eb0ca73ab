"""Text formats: conic problem files, DCP model files and solution reports.

Conic files
-----------
Line oriented, ``#`` starts a comment, blank lines are ignored. Sections come
in this order::

    CONICOA 1
    INT <n>
    <L_j> <U_j>                 n lines
    CONES <k>
    <TAG> <dim> [<alpha>]       k lines, TAG in ZERO NONNEG SOC EXP POW
    ROWS <m>
    [OBJMAP <sign> <offset>]    optional; reported objective = sign * (c.z + offset)
    OBJ <nnz>
    <k> <c_k>                   sparse objective over z
    RHS <nnz>
    <i> <b_i>
    AX <nnz>
    <i> <j> <value>
    AZ <nnz>
    <i> <k> <value>
    END

Indices are 0-based. Writers print floats with ``repr`` so parsing returns
bit-identical data.

Model files
-----------
S-expressions; ``;`` starts a comment::

    (int x -1 0)  (nonneg y)  (real w)
    (minimize <expr>)  or  (maximize <expr>)
    (<= <expr> <expr>)  (>= <expr> <expr>)  (= <expr> <expr>)

    <expr> := number | name | (+ e ...) | (- e) | (- e e) | (* e ...) | (/ e e)
            | (<atom> e ... [numeric parameters])

Names may be used before they are declared.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .cones import ConeError, ConeProduct, ConeSpec, ConeTag
from .dcp.atoms import get_atom, is_atom
from .dcp.expr import Atom, Constant, Constraint, Domain, Expression, Model, Op, Variable
from .oa import ConicProblem

FORMAT_HEADER = "CONICOA"
FORMAT_VERSION = 1


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


# conic files -------------------------------------------------------------

def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def format_conic(p: ConicProblem) -> str:
    out = [f"{FORMAT_HEADER} {FORMAT_VERSION}", f"INT {p.n}"]
    out += [f"{_num(lo)} {_num(hi)}" for lo, hi in zip(p.L, p.U)]
    out.append(f"CONES {len(p.cone)}")
    for f in p.cone.factors:
        line = f"{f.tag.value.upper()} {f.dim}"
        if f.tag is ConeTag.POW:
            line += f" {repr(f.alpha)}"
        out.append(line)
    out.append(f"ROWS {p.b.size}")
    if p.sign != 1.0 or p.offset != 0.0:
        out.append(f"OBJMAP {_num(p.sign)} {repr(p.offset)}")
    obj = np.flatnonzero(p.c)
    out.append(f"OBJ {obj.size}")
    out += [f"{k} {repr(float(p.c[k]))}" for k in obj]
    rhs = np.flatnonzero(p.b)
    out.append(f"RHS {rhs.size}")
    out += [f"{i} {repr(float(p.b[i]))}" for i in rhs]
    for name, M in (("AX", p.A_x), ("AZ", p.A_z)):
        C = sp.coo_matrix(M)
        keep = C.data != 0
        rows, cols, vals = C.row[keep], C.col[keep], C.data[keep]
        order = np.lexsort((cols, rows))
        out.append(f"{name} {order.size}")
        out += [f"{rows[t]} {cols[t]} {repr(float(vals[t]))}" for t in order]
    out.append("END")
    return "\n".join(out) + "\n"


class _Lines:
    def __init__(self, text: str):
        self.items = []
        for n, raw in enumerate(text.splitlines(), 1):
            body = raw.split("#", 1)[0]
            toks = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", body)]
            if toks:
                self.items.append((n, toks))
        self.pos = 0

    def next(self, what: str):
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 0
            raise ParseError(f"unexpected end of file, expected {what}", last + 1, 1)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def keyword(self, kw: str, nargs: int = 1):
        n, toks = self.next(kw)
        if toks[0][0] != kw:
            raise ParseError(f"expected {kw}, found {toks[0][0]!r}", n, toks[0][1])
        if len(toks) != nargs + 1:
            raise ParseError(f"{kw} takes {nargs} value(s)", n, toks[0][1])
        return n, toks[1:]


def _int(tok, line, lo=0, hi=None):
    s, col = tok
    try:
        v = int(s)
    except ValueError:
        raise ParseError(f"expected an integer, found {s!r}", line, col) from None
    if v < lo or (hi is not None and v >= hi):
        bound = f"[{lo}, {hi})" if hi is not None else f">= {lo}"
        raise ParseError(f"index {v} out of range {bound}", line, col)
    return v


def _float(tok, line, finite=True):
    s, col = tok
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"expected a number, found {s!r}", line, col) from None
    if finite and not math.isfinite(v):
        raise ParseError(f"non-finite value {s!r}", line, col)
    return v


def _entries(lines: _Lines, kw: str, width: int, limits):
    n0, (cnt,) = lines.keyword(kw)
    count = _int(cnt, n0)
    out = []
    for _ in range(count):
        n, toks = lines.next(f"{kw} entry")
        if len(toks) != width:
            raise ParseError(f"{kw} entry needs {width} fields, found {len(toks)}", n, toks[0][1])
        idx = [_int(t, n, 0, lim) for t, lim in zip(toks[:-1], limits)]
        out.append((*idx, _float(toks[-1], n)))
    return out


def parse_conic(text: str) -> ConicProblem:
    """Parse a conic file; errors carry 1-based line and column."""
    lines = _Lines(text)
    n, toks = lines.next(FORMAT_HEADER)
    if toks[0][0] != FORMAT_HEADER:
        raise ParseError(f"missing {FORMAT_HEADER} header", n, toks[0][1])
    if len(toks) != 2 or toks[1][0] != str(FORMAT_VERSION):
        raise ParseError(f"unsupported format version (expected {FORMAT_VERSION})", n,
                         toks[1][1] if len(toks) > 1 else toks[0][1])
    n, (cnt,) = lines.keyword("INT")
    nx = _int(cnt, n)
    L, U = np.zeros(nx), np.zeros(nx)
    for j in range(nx):
        n, toks = lines.next("integer bounds")
        if len(toks) != 2:
            raise ParseError("bounds line needs 2 numbers", n, toks[0][1])
        for t in toks:
            if not math.isfinite(_float(t, n, finite=False)):
                raise ParseError("non-finite integer bounds: integer variables need finite L and U", n, t[1])
        L[j], U[j] = _float(toks[0], n), _float(toks[1], n)
        if L[j] > U[j]:
            raise ParseError(f"empty bounds [{toks[0][0]}, {toks[1][0]}]", n, toks[0][1])
    n, (cnt,) = lines.keyword("CONES")
    specs = []
    for _ in range(_int(cnt, n)):
        n, toks = lines.next("cone")
        tag = toks[0][0].lower()
        if tag not in {t.value for t in ConeTag}:
            raise ParseError(f"unknown cone tag {toks[0][0]!r}", n, toks[0][1])
        want = 3 if tag == "pow" else 2
        if len(toks) != want:
            raise ParseError(f"{toks[0][0]} takes {want - 1} value(s)", n, toks[0][1])
        dim = _int(toks[1], n, 1)
        alpha = _float(toks[2], n) if tag == "pow" else None
        try:
            specs.append(ConeSpec(ConeTag(tag), dim, alpha))
        except ConeError as err:
            raise ParseError(str(err), n, toks[-1][1]) from None
    cone = ConeProduct(tuple(specs))
    n, (cnt,) = lines.keyword("ROWS")
    m = _int(cnt, n)
    sign, offset = 1.0, 0.0
    if lines.pos < len(lines.items) and lines.items[lines.pos][1][0][0] == "OBJMAP":
        n, toks = lines.keyword("OBJMAP", 2)
        sign, offset = _float(toks[0], n), _float(toks[1], n)
        if sign not in (1.0, -1.0):
            raise ParseError("OBJMAP sign must be 1 or -1", n, toks[0][1])
    c = np.zeros(cone.dim)
    for k, v in _entries(lines, "OBJ", 2, [cone.dim]):
        c[k] = v
    b = np.zeros(m)
    for i, v in _entries(lines, "RHS", 2, [m]):
        b[i] = v
    mats = []
    for kw, ncol in (("AX", nx), ("AZ", cone.dim)):
        ent = _entries(lines, kw, 3, [m, ncol])
        r = [e[0] for e in ent]
        cc = [e[1] for e in ent]
        v = [e[2] for e in ent]
        M = sp.csr_matrix((v, (r, cc)), shape=(m, ncol))
        M.sum_duplicates()
        mats.append(M)
    n, toks = lines.next("END")
    if toks[0][0] != "END" or len(toks) != 1:
        raise ParseError("expected END", n, toks[0][1])
    if lines.pos != len(lines.items):
        n, toks = lines.items[lines.pos]
        raise ParseError("content after END", n, toks[0][1])
    return ConicProblem(c, mats[0], mats[1], b, L, U, cone, offset=offset, sign=sign)


def conic_equal(p: ConicProblem, q: ConicProblem) -> bool:
    """Exact equality of problem data."""
    def same(A, B):
        return A.shape == B.shape and (sp.csr_matrix(A) != sp.csr_matrix(B)).nnz == 0
    return (p.cone == q.cone and p.offset == q.offset and p.sign == q.sign and np.array_equal(p.c, q.c) and np.array_equal(p.b, q.b)
            and np.array_equal(p.L, q.L) and np.array_equal(p.U, q.U)
            and same(p.A_x, q.A_x) and same(p.A_z, q.A_z))


# model files -------------------------------------------------------------

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s()]+")
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*$")
_OPS = {"+", "-", "*", "/"}
_FORMS = {"int", "nonneg", "real", "minimize", "maximize", "<=", ">=", "="}


@dataclass
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    out = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        s = m.group()
        if not s.isspace() and not s.startswith(";"):
            out.append(_Tok(s, line, m.start() - line_start + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = m.start() + s.rfind("\n") + 1
    return out


def _read_sexprs(text: str):
    """Nested lists of tokens; a list remembers its opening token."""
    toks = _tokenize(text)
    stack: list = [[]]
    opens: list = []
    for t in toks:
        if t.text == "(":
            stack.append([])
            opens.append(t)
        elif t.text == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", t.line, t.col)
            lst = stack.pop()
            stack[-1].append((opens.pop(), lst))
        else:
            stack[-1].append(t)
    if len(stack) > 1:
        t = opens[-1]
        raise ParseError("unclosed '('", t.line, t.col)
    return stack[0]


def _where(node):
    return (node[0].line, node[0].col) if isinstance(node, tuple) else (node.line, node.col)


def _is_number(node) -> bool:
    return isinstance(node, _Tok) and bool(_NUMBER.match(node.text))


def parse_model(text: str) -> Model:
    """Parse a model file into declarations, objective and constraints."""
    forms = _read_sexprs(text)
    decls: dict = {}
    order: list = []
    objective = None
    pending: list = []
    for node in forms:
        if not isinstance(node, tuple):
            raise ParseError(f"expected a parenthesised form, found {node.text!r}", node.line, node.col)
        head_tok, items = node
        if not items or not isinstance(items[0], _Tok):
            raise ParseError("form needs a keyword", head_tok.line, head_tok.col)
        kw = items[0].text
        if kw not in _FORMS:
            raise ParseError(f"unknown form {kw!r}", items[0].line, items[0].col)
        args = items[1:]
        if kw in ("int", "nonneg", "real"):
            want = 3 if kw == "int" else 1
            if len(args) != want or not isinstance(args[0], _Tok) or not _NAME.match(args[0].text):
                raise ParseError(f"({kw} NAME{' LO HI' if kw == 'int' else ''}) expected",
                                 head_tok.line, head_tok.col)
            name = args[0].text
            if name in decls:
                raise ParseError(f"variable {name} declared twice", args[0].line, args[0].col)
            if is_atom(name) or name in _FORMS:
                raise ParseError(f"{name!r} is reserved", args[0].line, args[0].col)
            if kw == "int":
                for a in args[1:]:
                    if not _is_number(a):
                        raise ParseError("integer bounds must be finite numbers", *_where(a))
                lo, hi = float(args[1].text), float(args[2].text)
                if lo > hi:
                    raise ParseError(f"empty bounds for {name}", *_where(args[1]))
                decls[name] = Variable(name, Domain.INT, lo, hi)
            else:
                decls[name] = Variable(name, Domain(kw))
            order.append(name)
        elif kw in ("minimize", "maximize"):
            if objective is not None:
                raise ParseError("second objective", head_tok.line, head_tok.col)
            if len(args) != 1:
                raise ParseError(f"({kw} EXPR) expected", head_tok.line, head_tok.col)
            objective = (kw, args[0])
        else:
            if len(args) != 2:
                raise ParseError(f"({kw} EXPR EXPR) expected", head_tok.line, head_tok.col)
            pending.append((kw, args[0], args[1]))

    def build(node) -> Expression:
        if isinstance(node, _Tok):
            if _is_number(node):
                return Constant(float(node.text))
            if node.text in decls:
                return decls[node.text]
            raise ParseError(f"undeclared name {node.text!r}", node.line, node.col)
        head_tok, items = node
        if not items or not isinstance(items[0], _Tok):
            raise ParseError("expression needs an operator or atom name", head_tok.line, head_tok.col)
        name = items[0].text
        if name in _OPS:
            try:
                return Op(name, tuple(build(a) for a in items[1:]))
            except ParseError:
                raise
            except ValueError as err:
                raise ParseError(str(err), items[0].line, items[0].col) from None
        if not is_atom(name):
            raise ParseError(f"unknown atom {name!r}", items[0].line, items[0].col)
        d = get_atom(name)
        rest = items[1:]
        if d.n_params:
            if len(rest) < d.n_params or not all(_is_number(t) for t in rest[-d.n_params:]):
                raise ParseError(f"{name} needs {d.n_params} trailing numeric parameter(s)",
                                 items[0].line, items[0].col)
            params = tuple(float(t.text) for t in rest[-d.n_params:])
            rest = rest[:-d.n_params]
        else:
            params = ()
        args = tuple(build(a) for a in rest)
        try:
            return Atom(name, args, params)
        except ValueError as err:
            raise ParseError(str(err), items[0].line, items[0].col) from None

    variables = tuple(decls[n] for n in order)
    sense, obj = "minimize", Constant(0.0)
    if objective is not None:
        sense, obj = objective[0], build(objective[1])
    cons = tuple(Constraint(kw, build(a), build(b)) for kw, a, b in pending)
    return Model(variables, obj, sense, cons)


def format_expression(e: Expression) -> str:
    if isinstance(e, Constant):
        return repr(e.value)
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Op):
        return "(" + " ".join([e.op] + [format_expression(a) for a in e.args]) + ")"
    parts = [e.name] + [format_expression(a) for a in e.args] + [repr(p) for p in e.params]
    return "(" + " ".join(parts) + ")"


def format_model(model: Model) -> str:
    out = []
    for v in model.variables:
        if v.domain is Domain.INT:
            out.append(f"(int {v.name} {repr(v.lo)} {repr(v.hi)})")
        else:
            out.append(f"({v.domain.value} {v.name})")
    out.append(f"({model.sense} {format_expression(model.objective)})")
    for c in model.constraints:
        out.append(f"({c.kind} {format_expression(c.lhs)} {format_expression(c.rhs)})")
    return "\n".join(out) + "\n"


def detect_format(text: str) -> str:
    """``"conic"`` if the first token is the conic header, else ``"model"``."""
    for raw in text.splitlines():
        body = raw.split("#", 1)[0].strip()
        if body:
            return "conic" if body.split()[0] == FORMAT_HEADER else "model"
    return "model"


# reports -----------------------------------------------------------------

@dataclass
class SolutionReport:
    status: str
    objective: Optional[float]
    x: Optional[List[float]]
    z: Optional[List[float]]
    bounds: Tuple[float, float]
    iterations: int
    cuts: List[int] = field(default_factory=list)  # per cone factor
    aggregated_cuts: int = 0
    wall_time: float = 0.0
    message: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SolutionReport":
        d = json.loads(text)
        d["bounds"] = tuple(d["bounds"])
        return cls(**d)

    def format(self) -> str:
        obj = "-" if self.objective is None else f"{self.objective:.6f}"
        lines = [f"status      {self.status}", f"objective   {obj}",
                 f"bounds      {self.bounds[0]!r} {self.bounds[1]!r}",
                 f"iterations  {self.iterations}",
                 f"cuts        {' '.join(str(c) for c in self.cuts) or '-'}"
                 + (f" (+{self.aggregated_cuts} aggregated)" if self.aggregated_cuts else ""),
                 f"time        {self.wall_time:.3f}s"]
        if self.x is not None:
            lines.append("x           " + " ".join(_num(v) for v in self.x))
        if self.message:
            lines.append(f"message     {self.message}")
        return "\n".join(lines)
