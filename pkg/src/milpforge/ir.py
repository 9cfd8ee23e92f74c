"""Solver-neutral model IR: linear expressions, indexed constraint families,
objective, structure annotations, and grounding against bound data.

Formulation text is parsed under a deliberately small linear grammar::

    constraint := expr REL expr ["forall" idx ("," idx)*]
    objective  := ("minimize"|"maximize") expr
    expr       := ["-"] product (("+"|"-") product)*
    product    := factor (["*"] factor)*          # juxtaposition multiplies
    factor     := NUMBER | ref | "(" expr ")" | "sum" SUB product
    ref        := IDENT [SUB]
    SUB        := "_" ( "{" idx ("," idx)* "}" | idx ("," idx)* )
    idx        := IDENT | INTEGER                 # literal indices are 1-based

Unicode comparison signs, the forall quantifier, and the minus sign are
normalized before tokenizing. Any product with two variable factors is
rejected as nonlinear; a coefficient may carry at most one parameter factor.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import (
    IndexOutOfRange,
    MissingData,
    NonlinearTerm,
    ParseError,
    ShapeMismatch,
    UnknownSymbol,
)
from .state import State, VarType

DEFAULT_BIG_M = 1e6

Index = tuple  # ("idx", name) or ("lit", one_based_int)


@dataclass(frozen=True)
class Ref:
    """A possibly-indexed symbol occurrence, e.g. x, Profit_j, T_{i,j}."""

    symbol: str
    indices: tuple = ()

    def render(self) -> str:
        if not self.indices:
            return self.symbol
        parts = [str(i[1]) for i in self.indices]
        return f"{self.symbol}_{{{','.join(parts)}}}" if len(parts) > 1 else f"{self.symbol}_{parts[0]}"


@dataclass(frozen=True)
class LinTerm:
    """scale * [param] * [var], optionally summed over indices."""

    scale: float = 1.0
    param: Optional[Ref] = None
    var: Optional[Ref] = None
    sum_over: tuple = ()

    def render(self) -> str:
        bits = []
        if self.scale != 1.0 or (self.param is None and self.var is None):
            bits.append(_fmt_num(self.scale))
        if self.param is not None:
            bits.append(self.param.render())
        if self.var is not None:
            bits.append(self.var.render())
        body = " ".join(bits) or "1"
        for idx in reversed(self.sum_over):
            body = f"sum_{idx} {body}"
        return body


@dataclass
class IRConstraint:
    id: str
    index_sets: list  # [(name, (size_expr, ...))] for every declared index
    forall: tuple  # names of the free (family) indices
    lhs_terms: list
    lhs_const: float
    relation: str  # '<=', '=', '>='
    rhs_terms: list
    rhs_const: float

    def __post_init__(self):
        names = [n for n, _ in self.index_sets]
        if len(set(names)) != len(names):
            raise ParseError(f"{self.id}: duplicate index names {names}")
        declared = set(names)
        for t in self.lhs_terms + self.rhs_terms:
            for ref in (t.param, t.var):
                if ref is None:
                    continue
                for kind, value in ref.indices:
                    if kind == "idx" and value not in declared:
                        raise ParseError(f"{self.id}: index '{value}' is not declared")

    def symbols(self) -> set:
        out = set()
        for t in self.lhs_terms + self.rhs_terms:
            if t.param is not None:
                out.add(t.param.symbol)
            if t.var is not None:
                out.add(t.var.symbol)
        return out

    def render(self) -> str:
        lhs = _render_side(self.lhs_terms, self.lhs_const)
        rhs = _render_side(self.rhs_terms, self.rhs_const)
        tail = f" forall {', '.join(self.forall)}" if self.forall else ""
        return f"{lhs} {self.relation} {rhs}{tail}"


@dataclass
class IRObjective:
    sense: str  # 'minimize' | 'maximize'
    terms: list
    const: float = 0.0
    index_sets: list = field(default_factory=list)

    def symbols(self) -> set:
        out = set()
        for t in self.terms:
            if t.param is not None:
                out.add(t.param.symbol)
            if t.var is not None:
                out.add(t.var.symbol)
        return out

    def render(self) -> str:
        return f"{self.sense} {_render_side(self.terms, self.const)}"


def _render_side(terms, const) -> str:
    bits = [t.render() for t in terms]
    if const or not bits:
        bits.append(_fmt_num(const))
    return " + ".join(bits).replace("+ -", "- ")


def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


# --- structure annotations -------------------------------------------------


@dataclass
class MemberSpec:
    """One member generator: a variable ref enumerated over optional indices."""

    ref: Ref
    over: list = field(default_factory=list)  # [(name, (size_expr, ...))]


@dataclass
class SOSAnnotation:
    kind: int  # 1 or 2
    members: list  # [MemberSpec]
    expand: list = field(default_factory=list)  # one grounded SOS per assignment


@dataclass
class IndicatorAnnotation:
    trigger: Ref
    terms: list
    const: float
    relation: str
    rhs: float
    trigger_value: int = 1
    expand: list = field(default_factory=list)
    big_m: Optional[float] = None


@dataclass
class SemiContinuousAnnotation:
    ref: Ref
    lower: float
    upper: float
    expand: list = field(default_factory=list)


@dataclass
class PiecewiseLinearAnnotation:
    x: Ref
    y: Ref
    breakpoints: list  # [(x, y)] strictly increasing in x
    expand: list = field(default_factory=list)


Annotation = Union[
    SOSAnnotation, IndicatorAnnotation, SemiContinuousAnnotation, PiecewiseLinearAnnotation
]


@dataclass
class ModelDocument:
    """Ordered fragments plus accepted structure annotations for one state."""

    fragments: dict = field(default_factory=dict)  # fragment id -> IRConstraint|IRObjective
    annotations: list = field(default_factory=list)

    def next_fragment_id(self) -> str:
        taken = [int(fid[1:]) for fid in self.fragments
                 if fid.startswith("f") and fid[1:].isdigit()]
        return f"f{max(taken, default=0) + 1}"


# --- grounded annotations ----------------------------------------------------


@dataclass
class GroundSOS:
    kind: int
    members: list  # column indices
    weights: list


@dataclass
class GroundIndicator:
    trigger_col: int
    trigger_value: int
    coeffs: dict  # col -> coefficient
    relation: str
    rhs: float
    big_m: Optional[float] = None


@dataclass
class GroundSemiCont:
    col: int  # bounds of the column give the [lower, upper] span


@dataclass
class GroundPWL:
    x_col: int
    y_col: int
    points: list


@dataclass
class GroundModel:
    sense: str
    c: np.ndarray
    obj_const: float
    A: sp.csr_matrix
    b: np.ndarray
    senses: list  # '<=' | '=' | '>=' per row
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray  # 1 where integer
    col_names: list
    row_names: list
    annotations: list = field(default_factory=list)

    def __post_init__(self):
        m, n = self.A.shape
        assert len(self.c) == n and len(self.lb) == n and len(self.ub) == n
        assert len(self.b) == m and len(self.senses) == m
        assert len(self.col_names) == n and len(self.row_names) == m
        assert len(set(self.col_names)) == n, "column names must be unique"
        assert len(set(self.row_names)) == m, "row names must be unique"
        assert np.all(np.isfinite(self.A.data)), "matrix entries must be finite"
        assert np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.A.shape[1]

    def col_index(self, name: str) -> int:
        return self.col_names.index(name)

    def take_rows(self, rows: Sequence[int]) -> "GroundModel":
        rows = list(rows)
        return GroundModel(
            sense=self.sense,
            c=self.c.copy(),
            obj_const=self.obj_const,
            A=self.A[rows, :].tocsr(),
            b=self.b[rows],
            senses=[self.senses[i] for i in rows],
            lb=self.lb.copy(),
            ub=self.ub.copy(),
            integrality=self.integrality.copy(),
            col_names=list(self.col_names),
            row_names=[self.row_names[i] for i in rows],
            annotations=list(self.annotations),
        )

    def take_columns(self, cols: Sequence[int]) -> "GroundModel":
        cols = list(cols)
        if self.annotations:
            raise ValueError("column restriction is not defined for annotated models")
        return GroundModel(
            sense=self.sense,
            c=self.c[cols],
            obj_const=self.obj_const,
            A=self.A[:, cols].tocsr(),
            b=self.b.copy(),
            senses=list(self.senses),
            lb=self.lb[cols],
            ub=self.ub[cols],
            integrality=self.integrality[cols],
            col_names=[self.col_names[j] for j in cols],
            row_names=list(self.row_names),
            annotations=[],
        )

    def content_equal(self, other: "GroundModel", tol: float = 0.0) -> bool:
        if (
            self.sense != other.sense
            or self.col_names != other.col_names
            or self.row_names != other.row_names
            or self.senses != other.senses
        ):
            return False
        def close(a, b):
            a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            if a.shape != b.shape:
                return False
            both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
            finite = ~both_inf
            return np.all(np.abs(a[finite] - b[finite]) <= tol)
        if not (
            close(self.c, other.c)
            and abs(self.obj_const - other.obj_const) <= tol
            and close(self.b, other.b)
            and close(self.lb, other.lb)
            and close(self.ub, other.ub)
            and np.array_equal(self.integrality, other.integrality)
        ):
            return False
        d = (self.A - other.A)
        if d.nnz and np.max(np.abs(d.data)) > tol:
            return False
        return sorted(_annotations_repr(self.annotations)) == sorted(
            _annotations_repr(other.annotations)
        )


def _annotations_repr(anns) -> list:
    out = []
    for a in anns:
        if isinstance(a, GroundSOS):
            out.append(("sos", a.kind, tuple(a.members), tuple(a.weights)))
        elif isinstance(a, GroundIndicator):
            out.append(
                ("ind", a.trigger_col, a.trigger_value, tuple(sorted(a.coeffs.items())), a.relation, a.rhs)
            )
        elif isinstance(a, GroundSemiCont):
            out.append(("sc", a.col))
        elif isinstance(a, GroundPWL):
            out.append(("pwl", a.x_col, a.y_col, tuple(map(tuple, a.points))))
    return out


# --- tokenizer ---------------------------------------------------------------

_NORMALIZE = {
    "≤": "<=",
    "≥": ">=",
    "−": "-",
    "·": "*",
    "×": "*",
    "∀": " forall ",
    "==": "=",
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9]*)"
    r"|(?P<op><=|>=|[-+*/()=_{},]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {text[pos]!r}", span=(pos, pos + 1))
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, text):
        self.tokens = tokens
        self.text = text
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, at = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", span=(at, at + 1))
        return val

    # expr := ['-'] product (('+'|'-') product)*
    def parse_expr(self):
        nodes = []
        sign = 1.0
        if self.peek()[1] in ("+", "-"):
            sign = -1.0 if self.next()[1] == "-" else 1.0
        nodes.append(("scaled", sign, self.parse_product()))
        while self.peek()[1] in ("+", "-"):
            sign = -1.0 if self.next()[1] == "-" else 1.0
            nodes.append(("scaled", sign, self.parse_product()))
        return ("sum_nodes", nodes)

    # product := factor (['*' | '/'] factor)*
    def parse_product(self):
        factors = [self.parse_factor()]
        while True:
            kind, val, at = self.peek()
            if val == "*":
                self.next()
                factors.append(self.parse_factor())
            elif val == "/":
                self.next()
                k2, v2, a2 = self.next()
                if k2 != "num":
                    raise ParseError("division is only supported by a numeric literal", span=(a2, a2 + 1))
                factors.append(("num", 1.0 / float(v2)))
            elif kind in ("num", "ident") or val == "(":
                factors.append(self.parse_factor())
            else:
                break
        return ("product", factors)

    def parse_factor(self):
        kind, val, at = self.peek()
        if val == "(":
            self.next()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if kind == "num":
            self.next()
            return ("num", float(val))
        if kind == "ident":
            self.next()
            if val == "sum":
                indices = self._parse_subscript(require=True, at=at)
                names = []
                for ik, iv in indices:
                    if ik != "idx":
                        raise ParseError("sum indices must be names", span=(at, at + 3))
                    names.append(iv)
                body = self.parse_product()
                return ("sum_over", tuple(names), body)
            indices = self._parse_subscript(require=False, at=at)
            return ("ref", val, tuple(indices))
        raise ParseError(f"unexpected {val or 'end of input'!r}", span=(at, at + 1))

    def _parse_subscript(self, require: bool, at: int):
        if self.peek()[1] != "_":
            if require:
                raise ParseError("'sum' needs a subscript, e.g. sum_j", span=(at, at + 3))
            return []
        self.next()
        indices = []
        braced = self.peek()[1] == "{"
        if braced:
            self.next()
        while True:
            kind, val, ia = self.next()
            if kind == "ident":
                indices.append(("idx", val))
            elif kind == "num":
                if "." in val or "e" in val or "E" in val:
                    raise ParseError("literal indices must be integers", span=(ia, ia + len(val)))
                lit = int(val)
                if lit < 1:
                    raise ParseError("literal indices are 1-based", span=(ia, ia + len(val)))
                indices.append(("lit", lit))
            else:
                raise ParseError("expected an index name or integer", span=(ia, ia + 1))
            if self.peek()[1] == ",":
                self.next()
                continue
            break
        if braced:
            self.expect("}")
        return indices


# --- AST -> linear terms ------------------------------------------------------


@dataclass
class _Mono:
    scale: float = 1.0
    params: tuple = ()
    vars: tuple = ()
    sums: tuple = ()


def _expand(node, context) -> list:
    """Expand an AST node into a list of monomials."""
    kind = node[0]
    if kind == "num":
        return [_Mono(scale=node[1])]
    if kind == "ref":
        symbol, indices = node[1], node[2]
        if symbol in context["parameters"]:
            return [_Mono(params=(Ref(symbol, indices),))]
        if symbol in context["variables"]:
            return [_Mono(vars=(Ref(symbol, indices),))]
        raise UnknownSymbol(f"'{symbol}' is not in the clause context")
    if kind == "scaled":
        return [replace(m, scale=m.scale * node[1]) for m in _expand(node[2], context)]
    if kind == "sum_nodes":
        out = []
        for child in node[1]:
            out.extend(_expand(child, context))
        return out
    if kind == "sum_over":
        names, body = node[1], node[2]
        return [replace(m, sums=names + m.sums) for m in _expand(body, context)]
    if kind == "product":
        monos = [_Mono()]
        for factor in node[1]:
            expanded = _expand(factor, context)
            monos = [
                _Mono(
                    scale=a.scale * b.scale,
                    params=a.params + b.params,
                    vars=a.vars + b.vars,
                    sums=a.sums + b.sums,
                )
                for a in monos
                for b in expanded
            ]
        return monos
    raise AssertionError(f"unknown node {kind}")


def _monos_to_terms(monos, clause_id: str):
    terms, const = [], 0.0
    for m in monos:
        if len(m.vars) > 1:
            names = " * ".join(v.symbol for v in m.vars)
            raise NonlinearTerm(f"{clause_id}: product of variables ({names}) is not linear")
        if len(m.params) > 1:
            names = " * ".join(p.symbol for p in m.params)
            raise ParseError(f"{clause_id}: products of parameters ({names}) are not supported")
        var = m.vars[0] if m.vars else None
        param = m.params[0] if m.params else None
        if var is None and param is None:
            if m.sums:
                raise ParseError(f"{clause_id}: summing a bare number needs an indexed symbol")
            const += m.scale
        else:
            terms.append(LinTerm(scale=m.scale, param=param, var=var, sum_over=m.sums))
    return terms, const


_FORALL_RE = re.compile(r"\bfor\s+all\b|\bforall\b|\bfor\b(?=\s+[A-Za-z])")
_SENSE_RE = re.compile(r"^\s*(minimize|maximize|min|max)\b", re.IGNORECASE)
_REL_SPLIT_RE = re.compile(r"(<=|>=|(?<![<>=])=(?!=))")


def _normalize(text: str) -> str:
    for k, v in _NORMALIZE.items():
        text = text.replace(k, v)
    return text


def build_fragment(clause_id: str, formulation: str, context: dict):
    """Parse a formulation into an IRConstraint or IRObjective.

    ``context`` holds ``parameters`` and ``variables`` as symbol->declaration
    mappings; every referenced symbol must appear there. Index ranges are
    inferred from the shapes of the symbols each index subscripts.
    """
    text = _normalize(formulation)
    sense_m = _SENSE_RE.match(text)
    if sense_m:
        sense = {"min": "minimize", "max": "maximize"}.get(
            sense_m.group(1).lower(), sense_m.group(1).lower()
        )
        body = text[sense_m.end():]
        tokens = _tokenize(body)
        parser = _Parser(tokens, body)
        ast = parser.parse_expr()
        if parser.peek()[0] != "eof":
            at = parser.peek()[2]
            raise ParseError(f"trailing input {parser.peek()[1]!r}", span=(at, at + 1))
        terms, const = _monos_to_terms(_expand(ast, context), clause_id)
        _check_no_free_indices(clause_id, terms, ())
        obj = IRObjective(sense=sense, terms=terms, const=const)
        obj.index_sets = _infer_index_sets(clause_id, terms, (), context)
        return obj

    forall_m = _FORALL_RE.search(text)
    forall_names: tuple = ()
    if forall_m:
        tail = text[forall_m.end():]
        names = [t.strip() for t in tail.split(",")]
        for name in names:
            if not re.match(r"^[A-Za-z][A-Za-z0-9]*$", name):
                raise ParseError(f"bad quantifier index {name!r}")
        forall_names = tuple(names)
        text = text[: forall_m.start()]

    pieces = [p for p in _REL_SPLIT_RE.split(text) if p is not None]
    rels = [p for p in pieces if p in ("<=", ">=", "=")]
    sides = [p for p in pieces if p not in ("<=", ">=", "=")]
    if len(rels) != 1 or len(sides) != 2:
        raise ParseError(
            f"{clause_id}: a constraint needs exactly one comparison, found {len(rels)}"
        )
    relation = rels[0]
    sides_terms = []
    for side in sides:
        tokens = _tokenize(side)
        parser = _Parser(tokens, side)
        ast = parser.parse_expr()
        if parser.peek()[0] != "eof":
            at = parser.peek()[2]
            raise ParseError(f"trailing input {parser.peek()[1]!r}", span=(at, at + 1))
        sides_terms.append(_monos_to_terms(_expand(ast, context), clause_id))
    (lhs_terms, lhs_const), (rhs_terms, rhs_const) = sides_terms
    all_terms = lhs_terms + rhs_terms
    _check_no_free_indices(clause_id, all_terms, forall_names)
    index_sets = _infer_index_sets(clause_id, all_terms, forall_names, context)
    return IRConstraint(
        id=clause_id,
        index_sets=index_sets,
        forall=forall_names,
        lhs_terms=lhs_terms,
        lhs_const=lhs_const,
        relation=relation,
        rhs_terms=rhs_terms,
        rhs_const=rhs_const,
    )


def _check_no_free_indices(clause_id, terms, forall_names):
    for t in terms:
        declared = set(forall_names) | set(t.sum_over)
        for ref in (t.param, t.var):
            if ref is None:
                continue
            for kind, value in ref.indices:
                if kind == "idx" and value not in declared:
                    raise ParseError(
                        f"{clause_id}: index '{value}' is neither summed nor quantified"
                    )


def _infer_index_sets(clause_id, terms, forall_names, context) -> list:
    """Collect (index name -> candidate size expressions) from every usage."""
    decls = {**context["parameters"], **context["variables"]}
    sizes: dict = {name: [] for name in forall_names}
    order = list(forall_names)
    for t in terms:
        for name in t.sum_over:
            if name not in sizes:
                sizes[name] = []
                order.append(name)
        for ref in (t.param, t.var):
            if ref is None:
                continue
            decl = decls[ref.symbol]
            if len(ref.indices) != len(decl.shape):
                raise ParseError(
                    f"{clause_id}: '{ref.symbol}' has {len(decl.shape)} dimension(s), "
                    f"subscripted with {len(ref.indices)}"
                )
            for axis, (kind, value) in enumerate(ref.indices):
                if kind != "idx":
                    continue
                expr = decl.shape[axis]
                ints = [e for e in sizes[value] if isinstance(e, int)]
                if isinstance(expr, int) and ints and expr not in ints:
                    raise ShapeMismatch(
                        f"{clause_id}: index '{value}' ranges over both {ints[0]} and {expr}"
                    )
                if expr not in sizes[value]:
                    sizes[value].append(expr)
    for name in order:
        if not sizes[name]:
            raise ParseError(f"{clause_id}: index '{name}' never subscripts a symbol")
    return [(name, tuple(sizes[name])) for name in order]


# --- grounding ----------------------------------------------------------------


def _resolve_size(exprs, dims, clause_id, index_name) -> int:
    resolved = []
    for expr in exprs:
        if isinstance(expr, int):
            resolved.append(expr)
        elif expr in dims:
            resolved.append(dims[expr])
        else:
            raise MissingData(expr)
    first = resolved[0]
    for r in resolved[1:]:
        if r != first:
            raise ShapeMismatch(
                f"{clause_id}: index '{index_name}' resolves to both {first} and {r}"
            )
    return first


def _resolve_indices(ref, assignment, sizes, owner_id):
    out = []
    for axis, (kind, value) in enumerate(ref.indices):
        if kind == "lit":
            idx = value - 1  # literal subscripts are 1-based
            size = None
        else:
            idx = assignment[value]
            size = sizes[value]
        out.append((idx, size, axis))
    return out


class _ColumnTable:
    def __init__(self):
        self.names: list = []
        self.index: dict = {}
        self.lb: list = []
        self.ub: list = []
        self.integrality: list = []

    def add(self, name, lb, ub, integer):
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integrality.append(1 if integer else 0)


def _element_name(symbol: str, idx: tuple) -> str:
    if not idx:
        return symbol
    return f"{symbol}[{','.join(str(i) for i in idx)}]"


def ground(fragments, state: State, annotations=(), check_unused_data=False) -> GroundModel:
    """Expand IR fragments against bound data into numeric matrix form.

    Fragments are processed in the given order; rows of indexed families are
    emitted in row-major index order. Variables become columns in state
    registration order. Exactly one objective fragment is required.
    """
    if isinstance(fragments, ModelDocument):
        annotations = list(fragments.annotations) + list(annotations)
        fragments = list(fragments.fragments.values())
    fragments = list(fragments)

    dims = state.resolve_dims()
    objectives = [f for f in fragments if isinstance(f, IRObjective)]
    constraints = [f for f in fragments if isinstance(f, IRConstraint)]
    if len(objectives) != 1:
        raise ShapeMismatch(f"model needs exactly one objective fragment, found {len(objectives)}")
    objective = objectives[0]

    cols = _ColumnTable()
    for symbol, var in state.variables.items():
        shape = []
        for d in var.shape:
            if isinstance(d, int):
                shape.append(d)
            elif d in dims:
                shape.append(dims[d])
            else:
                raise MissingData(d)
        shape = tuple(shape)
        lo, hi = var.bounds if var.bounds is not None else (None, None)
        if var.vartype is VarType.BINARY:
            lo = 0.0 if lo is None else lo
            hi = 1.0 if hi is None else hi
        lo = 0.0 if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        integer = var.vartype in (VarType.INTEGER, VarType.BINARY)
        if shape == ():
            cols.add(symbol, lo, hi, integer)
        else:
            for idx in np.ndindex(*shape):
                cols.add(_element_name(symbol, idx), lo, hi, integer)

    def param_value(ref: Ref, assignment, sizes, owner):
        arr = state.data_store.get(ref.symbol)
        if arr is None:
            raise MissingData(ref.symbol)
        idx = []
        for pos, size, axis in _resolve_indices(ref, assignment, sizes, owner):
            limit = arr.shape[axis]
            if not 0 <= pos < limit:
                raise IndexOutOfRange(
                    f"{owner}: index {pos + 1} out of range for '{ref.symbol}' axis {axis} "
                    f"(size {limit})"
                )
            idx.append(pos)
        return float(arr[tuple(idx)]) if idx else float(arr)

    def var_column(ref: Ref, assignment, sizes, owner):
        decl = state.variables[ref.symbol]
        shape = tuple(d if isinstance(d, int) else dims[d] for d in decl.shape)
        idx = []
        for pos, size, axis in _resolve_indices(ref, assignment, sizes, owner):
            if not 0 <= pos < shape[axis]:
                raise IndexOutOfRange(
                    f"{owner}: index {pos + 1} out of range for '{ref.symbol}' axis {axis} "
                    f"(size {shape[axis]})"
                )
            idx.append(pos)
        return cols.index[_element_name(ref.symbol, tuple(idx))]

    def accumulate(terms, const, assignment, sizes, owner, coeffs, sign):
        """Add sign * (terms + const) under the free-index assignment."""
        total_const = sign * const
        for t in terms:
            sum_sizes = [sizes[n] for n in t.sum_over]
            for combo in np.ndindex(*sum_sizes) if sum_sizes else [()]:
                local = dict(assignment)
                local.update(zip(t.sum_over, combo))
                coeff = sign * t.scale
                if t.param is not None:
                    coeff *= param_value(t.param, local, sizes, owner)
                if t.var is None:
                    total_const += coeff
                else:
                    col = var_column(t.var, local, sizes, owner)
                    coeffs[col] = coeffs.get(col, 0.0) + coeff
        return total_const

    rows_data, rows_b, rows_sense, row_names = [], [], [], []
    for cons in constraints:
        sizes = {
            name: _resolve_size(exprs, dims, cons.id, name) for name, exprs in cons.index_sets
        }
        free_sizes = [sizes[n] for n in cons.forall]
        for combo in np.ndindex(*free_sizes) if free_sizes else [()]:
            assignment = dict(zip(cons.forall, combo))
            coeffs: dict = {}
            lhs_const = accumulate(
                cons.lhs_terms, cons.lhs_const, assignment, sizes, cons.id, coeffs, +1.0
            )
            rhs_const = accumulate(
                cons.rhs_terms, cons.rhs_const, assignment, sizes, cons.id, coeffs, -1.0
            )
            rows_data.append(coeffs)
            rows_b.append(-(lhs_const + rhs_const))
            rows_sense.append(cons.relation)
            row_names.append(_element_name(cons.id, combo))

    sizes = {
        name: _resolve_size(exprs, dims, "objective", name) for name, exprs in objective.index_sets
    }
    obj_coeffs: dict = {}
    obj_const = accumulate(objective.terms, objective.const, {}, sizes, "objective", obj_coeffs, +1.0)

    n = len(cols.names)
    c = np.zeros(n)
    for col, v in obj_coeffs.items():
        c[col] = v
    data, ri, ci = [], [], []
    for i, coeffs in enumerate(rows_data):
        for col, v in coeffs.items():
            if v != 0.0:
                data.append(v)
                ri.append(i)
                ci.append(col)
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows_data), n))

    model = GroundModel(
        sense=objective.sense,
        c=c,
        obj_const=obj_const,
        A=A,
        b=np.array(rows_b, dtype=float),
        senses=rows_sense,
        lb=np.array(cols.lb, dtype=float),
        ub=np.array(cols.ub, dtype=float),
        integrality=np.array(cols.integrality, dtype=int),
        col_names=cols.names,
        row_names=row_names,
    )
    for ann in annotations:
        model.annotations.extend(_ground_annotation(ann, state, dims, cols, model))
    return model


def _ground_annotation(ann: Annotation, state: State, dims, cols, model: GroundModel):
    def size_of(exprs, name):
        return _resolve_size(exprs, dims, "annotation", name)

    def expand_assignments(expand):
        names = [n for n, _ in expand]
        extents = [size_of(exprs, n) for n, exprs in expand]
        for combo in np.ndindex(*extents) if extents else [()]:
            yield dict(zip(names, combo))

    def column(ref: Ref, assignment):
        if ref.symbol not in state.variables:
            raise UnknownSymbol(f"annotation references unknown variable '{ref.symbol}'")
        idx = []
        for kind, value in ref.indices:
            idx.append(value - 1 if kind == "lit" else assignment[value])
        name = _element_name(ref.symbol, tuple(idx))
        if name not in cols.index:
            raise IndexOutOfRange(f"annotation member '{name}' does not exist")
        return cols.index[name]

    if isinstance(ann, SOSAnnotation):
        out = []
        for assignment in expand_assignments(ann.expand):
            members = []
            for spec in ann.members:
                over_names = [n for n, _ in spec.over]
                extents = [size_of(exprs, n) for n, exprs in spec.over]
                for combo in np.ndindex(*extents) if extents else [()]:
                    local = dict(assignment)
                    local.update(zip(over_names, combo))
                    members.append(column(spec.ref, local))
            if len(members) < 2:
                raise ShapeMismatch(f"SOS{ann.kind} needs at least 2 members, got {len(members)}")
            out.append(GroundSOS(ann.kind, members, list(range(1, len(members) + 1))))
        return out
    if isinstance(ann, IndicatorAnnotation):
        out = []
        for assignment in expand_assignments(ann.expand):
            trig = column(ann.trigger, assignment)
            if not model.integrality[trig] or model.lb[trig] < 0 or model.ub[trig] > 1:
                raise ShapeMismatch(
                    f"indicator trigger '{model.col_names[trig]}' must be a binary variable"
                )
            coeffs: dict = {}
            const = ann.const
            for t in ann.terms:
                if t.sum_over:
                    raise ShapeMismatch("indicator implied constraints may not contain sums")
                coeff = t.scale
                if t.param is not None:
                    arr = state.data_store.get(t.param.symbol)
                    if arr is None:
                        raise MissingData(t.param.symbol)
                    idx = tuple(
                        value - 1 if kind == "lit" else assignment[value]
                        for kind, value in t.param.indices
                    )
                    coeff *= float(arr[idx]) if idx else float(arr)
                if t.var is None:
                    const += coeff
                else:
                    col = column(t.var, assignment)
                    coeffs[col] = coeffs.get(col, 0.0) + coeff
            out.append(
                GroundIndicator(
                    trigger_col=trig,
                    trigger_value=ann.trigger_value,
                    coeffs=coeffs,
                    relation=ann.relation,
                    rhs=ann.rhs - const,
                    big_m=ann.big_m,
                )
            )
        return out
    if isinstance(ann, SemiContinuousAnnotation):
        if not (0 < ann.lower <= ann.upper):
            raise ShapeMismatch(
                f"semi-continuous span needs 0 < lower <= upper, got ({ann.lower}, {ann.upper})"
            )
        out = []
        for assignment in expand_assignments(ann.expand):
            col = column(ann.ref, assignment)
            model.lb[col] = ann.lower
            model.ub[col] = ann.upper
            out.append(GroundSemiCont(col))
        return out
    if isinstance(ann, PiecewiseLinearAnnotation):
        xs = [p[0] for p in ann.breakpoints]
        if len(xs) < 2 or any(b <= a for a, b in zip(xs, xs[1:])):
            raise ShapeMismatch("piecewise-linear breakpoints must be strictly increasing in x")
        out = []
        for assignment in expand_assignments(ann.expand):
            out.append(
                GroundPWL(
                    x_col=column(ann.x, assignment),
                    y_col=column(ann.y, assignment),
                    points=[(float(a), float(b)) for a, b in ann.breakpoints],
                )
            )
        return out
    raise TypeError(f"unknown annotation type {type(ann).__name__}")


# --- JSON serialization -------------------------------------------------------


def _ref_to_dict(ref: Optional[Ref]):
    if ref is None:
        return None
    return {"symbol": ref.symbol, "indices": [list(i) for i in ref.indices]}


def _ref_from_dict(doc) -> Optional[Ref]:
    if doc is None:
        return None
    return Ref(doc["symbol"], tuple((k, v) for k, v in doc["indices"]))


def _term_to_dict(t: LinTerm) -> dict:
    return {"scale": t.scale, "param": _ref_to_dict(t.param), "var": _ref_to_dict(t.var),
            "sum_over": list(t.sum_over)}


def _term_from_dict(doc) -> LinTerm:
    return LinTerm(scale=float(doc["scale"]), param=_ref_from_dict(doc["param"]),
                   var=_ref_from_dict(doc["var"]), sum_over=tuple(doc["sum_over"]))


def _sets_to_list(index_sets) -> list:
    return [[name, list(exprs)] for name, exprs in index_sets]


def _sets_from_list(entries) -> list:
    return [(name, tuple(exprs)) for name, exprs in entries]


def fragment_to_dict(fragment) -> dict:
    if isinstance(fragment, IRObjective):
        return {
            "kind": "objective",
            "sense": fragment.sense,
            "terms": [_term_to_dict(t) for t in fragment.terms],
            "const": fragment.const,
            "index_sets": _sets_to_list(fragment.index_sets),
        }
    return {
        "kind": "constraint",
        "id": fragment.id,
        "index_sets": _sets_to_list(fragment.index_sets),
        "forall": list(fragment.forall),
        "lhs_terms": [_term_to_dict(t) for t in fragment.lhs_terms],
        "lhs_const": fragment.lhs_const,
        "relation": fragment.relation,
        "rhs_terms": [_term_to_dict(t) for t in fragment.rhs_terms],
        "rhs_const": fragment.rhs_const,
    }


def fragment_from_dict(doc: dict):
    if doc["kind"] == "objective":
        return IRObjective(
            sense=doc["sense"],
            terms=[_term_from_dict(t) for t in doc["terms"]],
            const=float(doc["const"]),
            index_sets=_sets_from_list(doc["index_sets"]),
        )
    return IRConstraint(
        id=doc["id"],
        index_sets=_sets_from_list(doc["index_sets"]),
        forall=tuple(doc["forall"]),
        lhs_terms=[_term_from_dict(t) for t in doc["lhs_terms"]],
        lhs_const=float(doc["lhs_const"]),
        relation=doc["relation"],
        rhs_terms=[_term_from_dict(t) for t in doc["rhs_terms"]],
        rhs_const=float(doc["rhs_const"]),
    )


def annotation_to_dict(ann: Annotation) -> dict:
    if isinstance(ann, SOSAnnotation):
        return {"kind": f"SOS{ann.kind}", "expand": _sets_to_list(ann.expand),
                "members": [{"ref": _ref_to_dict(m.ref), "over": _sets_to_list(m.over)}
                            for m in ann.members]}
    if isinstance(ann, IndicatorAnnotation):
        return {"kind": "Indicator", "expand": _sets_to_list(ann.expand),
                "trigger": _ref_to_dict(ann.trigger), "trigger_value": ann.trigger_value,
                "terms": [_term_to_dict(t) for t in ann.terms], "const": ann.const,
                "relation": ann.relation, "rhs": ann.rhs, "big_m": ann.big_m}
    if isinstance(ann, SemiContinuousAnnotation):
        return {"kind": "SemiContinuous", "expand": _sets_to_list(ann.expand),
                "ref": _ref_to_dict(ann.ref), "lower": ann.lower, "upper": ann.upper}
    if isinstance(ann, PiecewiseLinearAnnotation):
        return {"kind": "PiecewiseLinear", "expand": _sets_to_list(ann.expand),
                "x": _ref_to_dict(ann.x), "y": _ref_to_dict(ann.y),
                "breakpoints": [list(p) for p in ann.breakpoints]}
    raise TypeError(f"cannot serialize {type(ann).__name__}")


def annotation_from_dict(doc: dict) -> Annotation:
    kind = doc["kind"]
    if kind in ("SOS1", "SOS2"):
        return SOSAnnotation(
            kind=int(kind[-1]),
            members=[MemberSpec(ref=_ref_from_dict(m["ref"]), over=_sets_from_list(m["over"]))
                     for m in doc["members"]],
            expand=_sets_from_list(doc["expand"]),
        )
    if kind == "Indicator":
        return IndicatorAnnotation(
            trigger=_ref_from_dict(doc["trigger"]),
            trigger_value=int(doc["trigger_value"]),
            terms=[_term_from_dict(t) for t in doc["terms"]],
            const=float(doc["const"]),
            relation=doc["relation"],
            rhs=float(doc["rhs"]),
            expand=_sets_from_list(doc["expand"]),
            big_m=doc.get("big_m"),
        )
    if kind == "SemiContinuous":
        return SemiContinuousAnnotation(
            ref=_ref_from_dict(doc["ref"]), lower=float(doc["lower"]),
            upper=float(doc["upper"]), expand=_sets_from_list(doc["expand"]),
        )
    if kind == "PiecewiseLinear":
        return PiecewiseLinearAnnotation(
            x=_ref_from_dict(doc["x"]), y=_ref_from_dict(doc["y"]),
            breakpoints=[(float(a), float(b)) for a, b in doc["breakpoints"]],
            expand=_sets_from_list(doc["expand"]),
        )
    raise ValueError(f"unknown annotation kind '{kind}'")


def document_to_dict(doc: ModelDocument) -> dict:
    return {"fragments": {fid: fragment_to_dict(f) for fid, f in doc.fragments.items()},
            "annotations": [annotation_to_dict(a) for a in doc.annotations]}


def document_from_dict(payload: dict) -> ModelDocument:
    return ModelDocument(
        fragments={fid: fragment_from_dict(f) for fid, f in payload["fragments"].items()},
        annotations=[annotation_from_dict(a) for a in payload["annotations"]],
    )


# --- diagnostics ---------------------------------------------------------------


def validate(model: GroundModel) -> list:
    """Non-fatal model diagnostics: unused columns, empty rows, free directions."""
    notes = []
    used = set(model.A.nonzero()[1])
    for a in model.annotations:
        if isinstance(a, GroundSOS):
            used.update(a.members)
        elif isinstance(a, GroundIndicator):
            used.add(a.trigger_col)
            used.update(a.coeffs)
        elif isinstance(a, GroundSemiCont):
            used.add(a.col)
        elif isinstance(a, GroundPWL):
            used.update((a.x_col, a.y_col))
    for j, name in enumerate(model.col_names):
        if j not in used and model.c[j] == 0.0:
            notes.append(f"unused variable '{name}'")
    csr = model.A.tocsr()
    for i in range(model.num_rows):
        if csr.indptr[i] == csr.indptr[i + 1]:
            b, sense = model.b[i], model.senses[i]
            trivially_true = (
                (sense == "<=" and b >= 0) or (sense == ">=" and b <= 0) or (sense == "=" and b == 0)
            )
            if trivially_true:
                notes.append(f"empty row '{model.row_names[i]}' is trivially satisfied")
            else:
                notes.append(f"empty row '{model.row_names[i]}' can never hold (0 {sense} {b:g})")
    direction = -1.0 if model.sense == "minimize" else 1.0
    for j in range(model.num_cols):
        if model.c[j] == 0.0 or csr[:, j].nnz:
            continue
        improving_up = direction * model.c[j] > 0
        if improving_up and np.isinf(model.ub[j]):
            notes.append(f"objective can grow without bound along '{model.col_names[j]}'")
        if not improving_up and np.isinf(model.lb[j]):
            notes.append(f"objective can grow without bound along '{model.col_names[j]}'")
    return notes


# --- annotation lowering ----------------------------------------------------------


def lower_pwl(model: GroundModel):
    """Rewrite only piecewise-linear annotations into interpolation rows.

    Each GroundPWL becomes weight columns, three defining rows, and an SOS2
    annotation over the weights; everything else is untouched. Used by the LP
    writer, which can represent SOS natively but has no PWL section.
    """
    pwl = [a for a in model.annotations if isinstance(a, GroundPWL)]
    if not pwl:
        return model, []
    keep = [a for a in model.annotations if not isinstance(a, GroundPWL)]
    n = model.num_cols
    c = list(model.c)
    lb = list(model.lb)
    ub = list(model.ub)
    integrality = list(model.integrality)
    col_names = list(model.col_names)
    b_list = list(model.b)
    senses = list(model.senses)
    row_names = list(model.row_names)
    coo = model.A.tocoo()
    data = coo.data.tolist()
    ri = coo.row.tolist()
    ci = coo.col.tolist()
    records = []
    for k, ann in enumerate(pwl):
        tag = f"pwl{k}"
        lams = []
        for i in range(len(ann.points)):
            col_names.append(f"{tag}_w{i}")
            lb.append(0.0)
            ub.append(1.0)
            integrality.append(0)
            c.append(0.0)
            lams.append(n)
            n += 1
        rows = [
            ({l: 1.0 for l in lams}, "=", 1.0, f"{tag}_sum"),
            ({**{l: ann.points[i][0] for i, l in enumerate(lams)}, ann.x_col: -1.0},
             "=", 0.0, f"{tag}_x"),
            ({**{l: ann.points[i][1] for i, l in enumerate(lams)}, ann.y_col: -1.0},
             "=", 0.0, f"{tag}_y"),
        ]
        for coeffs, sense, rhs, name in rows:
            for col, v in coeffs.items():
                if v != 0.0:
                    data.append(v)
                    ri.append(len(b_list))
                    ci.append(col)
            b_list.append(rhs)
            senses.append(sense)
            row_names.append(name)
        keep.append(GroundSOS(kind=2, members=lams, weights=list(range(1, len(lams) + 1))))
        records.append(
            f"piecewise-linear '{model.col_names[ann.x_col]}'->'{model.col_names[ann.y_col]}'"
            " -> interpolation weights + SOS2"
        )
    lowered = GroundModel(
        sense=model.sense,
        c=np.array(c, dtype=float),
        obj_const=model.obj_const,
        A=sp.csr_matrix((data, (ri, ci)), shape=(len(b_list), n)),
        b=np.array(b_list, dtype=float),
        senses=senses,
        lb=np.array(lb, dtype=float),
        ub=np.array(ub, dtype=float),
        integrality=np.array(integrality, dtype=int),
        col_names=col_names,
        row_names=row_names,
        annotations=keep,
    )
    return lowered, records


def lower_annotations(model: GroundModel, default_big_m: float = DEFAULT_BIG_M):
    """Rewrite all structure annotations into plain rows/columns.

    Returns (lowered GroundModel, list of human-readable lowering records).
    Indicators become big-M rows; SOS sets get linking binaries; semi-continuous
    spans get an on/off binary; piecewise-linear pairs get interpolation weights
    whose SOS2 is lowered in turn.
    """
    records = []
    anns = list(model.annotations)
    n = model.num_cols
    c = list(model.c)
    lb = list(model.lb)
    ub = list(model.ub)
    integrality = list(model.integrality)
    col_names = list(model.col_names)
    new_rows = []  # (coeffs dict, sense, b, name)
    b_list = list(model.b)
    senses = list(model.senses)
    row_names = list(model.row_names)

    def add_col(name, lo, hi, integer, obj=0.0):
        nonlocal n
        col_names.append(name)
        lb.append(lo)
        ub.append(hi)
        integrality.append(1 if integer else 0)
        c.append(obj)
        n += 1
        return n - 1

    def add_row(coeffs, sense, rhs, name):
        new_rows.append((dict(coeffs), sense, rhs, name))

    def cap(value, fallback):
        return value if np.isfinite(value) else fallback

    sos_sets = []
    for k, ann in enumerate(anns):
        tag = f"a{k}"
        if isinstance(ann, GroundIndicator):
            m_val = ann.big_m if ann.big_m is not None else default_big_m
            # active when trigger == trigger_value; slack term vanishes then
            if ann.trigger_value == 1:
                slack = {ann.trigger_col: m_val}
                offset = m_val
            else:
                slack = {ann.trigger_col: -m_val}
                offset = 0.0
            if ann.relation in ("<=", "="):
                coeffs = dict(ann.coeffs)
                for col, v in slack.items():
                    coeffs[col] = coeffs.get(col, 0.0) + v
                add_row(coeffs, "<=", ann.rhs + offset, f"{tag}_le")
            if ann.relation in (">=", "="):
                coeffs = dict(ann.coeffs)
                for col, v in slack.items():
                    coeffs[col] = coeffs.get(col, 0.0) - v
                add_row(coeffs, ">=", ann.rhs - offset, f"{tag}_ge")
            records.append(f"indicator on '{col_names[ann.trigger_col]}' -> big-M rows (M={m_val:g})")
        elif isinstance(ann, GroundSOS):
            sos_sets.append((tag, ann.kind, list(ann.members)))
        elif isinstance(ann, GroundSemiCont):
            lo, hi = lb[ann.col], ub[ann.col]
            z = add_col(f"{tag}_on", 0.0, 1.0, True)
            add_row({ann.col: 1.0, z: -hi}, "<=", 0.0, f"{tag}_ub")
            add_row({ann.col: 1.0, z: -lo}, ">=", 0.0, f"{tag}_lb")
            lb[ann.col] = 0.0
            records.append(f"semi-continuous '{col_names[ann.col]}' -> on/off binary")
        elif isinstance(ann, GroundPWL):
            lams = [
                add_col(f"{tag}_w{i}", 0.0, 1.0, False) for i in range(len(ann.points))
            ]
            add_row({l: 1.0 for l in lams}, "=", 1.0, f"{tag}_sum")
            xc = {l: ann.points[i][0] for i, l in enumerate(lams)}
            xc[ann.x_col] = xc.get(ann.x_col, 0.0) - 1.0
            add_row(xc, "=", 0.0, f"{tag}_x")
            yc = {l: ann.points[i][1] for i, l in enumerate(lams)}
            yc[ann.y_col] = yc.get(ann.y_col, 0.0) - 1.0
            add_row(yc, "=", 0.0, f"{tag}_y")
            sos_sets.append((f"{tag}_seg", 2, lams))
            records.append(
                f"piecewise-linear '{col_names[ann.x_col]}'->'{col_names[ann.y_col]}' -> "
                f"interpolation weights + SOS2"
            )
        else:
            raise TypeError(f"cannot lower {type(ann).__name__}")

    for tag, kind, members in sos_sets:
        zs = []
        for i, col in enumerate(members):
            z = add_col(f"{tag}_z{i}", 0.0, 1.0, True)
            zs.append(z)
            hi = cap(ub[col], default_big_m)
            lo = cap(lb[col], -default_big_m)
            if hi > 0:
                add_row({col: 1.0, z: -hi}, "<=", 0.0, f"{tag}_u{i}")
            if lo < 0:
                add_row({col: 1.0, z: -lo}, ">=", 0.0, f"{tag}_l{i}")
        add_row({z: 1.0 for z in zs}, "<=", float(kind), f"{tag}_card")
        if kind == 2:
            for i in range(len(zs)):
                for j in range(i + 2, len(zs)):
                    add_row({zs[i]: 1.0, zs[j]: 1.0}, "<=", 1.0, f"{tag}_adj{i}_{j}")
        records.append(f"SOS{kind} over {len(members)} members -> linking binaries")

    data, ri, ci = [], [], []
    coo = model.A.tocoo()
    data.extend(coo.data.tolist())
    ri.extend(coo.row.tolist())
    ci.extend(coo.col.tolist())
    base = model.num_rows
    for i, (coeffs, sense, rhs, name) in enumerate(new_rows):
        for col, v in coeffs.items():
            if v != 0.0:
                data.append(v)
                ri.append(base + i)
                ci.append(col)
        b_list.append(rhs)
        senses.append(sense)
        row_names.append(name)

    lowered = GroundModel(
        sense=model.sense,
        c=np.array(c, dtype=float),
        obj_const=model.obj_const,
        A=sp.csr_matrix((data, (ri, ci)), shape=(len(b_list), n)),
        b=np.array(b_list, dtype=float),
        senses=senses,
        lb=np.array(lb, dtype=float),
        ub=np.array(ub, dtype=float),
        integrality=np.array(integrality, dtype=int),
        col_names=col_names,
        row_names=row_names,
        annotations=[],
    )
    return lowered, records
