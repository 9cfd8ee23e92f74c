"""Evolving modeling state: parameters, variables, clauses, connection graph.

The state is the single source of truth for a modeling run. Numeric data is
kept in a separate ``data_store`` keyed by symbol so that prompt-visible
descriptors stay small. The connection graph is strictly bipartite: edges
join a clause id to a parameter/variable symbol, nothing else.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import (
    DuplicateSymbol,
    InvalidShape,
    InvalidSymbol,
    MilpforgeError,
    SchemaViolation,
    ShapeMismatch,
    StatusRegression,
    UnknownClause,
    UnknownSymbol,
)

SCHEMA_VERSION = 1

# Underscore is reserved as the subscript operator in formulation text.
_IDENT_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")

Dim = Union[int, str]


def _check_symbol(symbol: str) -> None:
    if not _IDENT_RE.match(symbol):
        raise InvalidSymbol(
            f"'{symbol}' is not a valid symbol (letters and digits, starting with a letter)"
        )


def _check_shape(symbol: str, shape) -> tuple:
    dims = tuple(shape)
    for d in dims:
        if isinstance(d, bool) or not isinstance(d, (int, str)):
            raise InvalidShape(f"{symbol}: dimension {d!r} must be an int or a name")
        if isinstance(d, int) and d < 0:
            raise InvalidShape(f"{symbol}: negative dimension {d}")
        if isinstance(d, str) and not _IDENT_RE.match(d):
            raise InvalidShape(f"{symbol}: bad dimension name '{d}'")
    return dims


class VarType(str, Enum):
    CONTINUOUS = "Continuous"
    INTEGER = "Integer"
    BINARY = "Binary"


class ClauseKind(str, Enum):
    CONSTRAINT = "Constraint"
    OBJECTIVE = "Objective"


class ClauseStatus(str, Enum):
    EXTRACTED = "Extracted"
    FORMULATED = "Formulated"
    CODED = "Coded"

    @property
    def rank(self) -> int:
        return ["Extracted", "Formulated", "Coded"].index(self.value)


@dataclass
class Parameter:
    symbol: str
    shape: tuple = ()
    definition: str = ""

    def __post_init__(self):
        _check_symbol(self.symbol)
        self.shape = _check_shape(self.symbol, self.shape)


@dataclass
class Variable:
    symbol: str
    shape: tuple = ()
    definition: str = ""
    vartype: VarType = VarType.CONTINUOUS
    bounds: Optional[tuple] = None  # (lower, upper), None entries = infinite

    def __post_init__(self):
        _check_symbol(self.symbol)
        self.shape = _check_shape(self.symbol, self.shape)
        self.vartype = VarType(self.vartype)
        if self.bounds is not None:
            lo, hi = self.bounds
            self.bounds = (None if lo is None else float(lo), None if hi is None else float(hi))
            if self.vartype is VarType.BINARY:
                lo = 0.0 if lo is None else lo
                hi = 1.0 if hi is None else hi
                if lo < 0.0 or hi > 1.0:
                    raise InvalidShape(f"{self.symbol}: binary bounds must lie within [0, 1]")


@dataclass
class Clause:
    id: str
    kind: ClauseKind
    description: str = ""
    formulation: Optional[str] = None
    fragment: Optional[str] = None
    status: ClauseStatus = ClauseStatus.EXTRACTED
    confidence: Optional[int] = None

    def __post_init__(self):
        _check_symbol(self.id)
        self.kind = ClauseKind(self.kind)
        self.status = ClauseStatus(self.status)


class ConnectionGraph:
    """Bipartite clause-to-symbol edge set with set semantics and stable order."""

    def __init__(self):
        self._edges: dict = {}  # (clause_id, symbol) -> None, insertion ordered

    @property
    def edges(self) -> list:
        return list(self._edges)

    def __len__(self) -> int:
        return len(self._edges)

    def add(self, clause_id: str, symbol: str) -> None:
        self._edges[(clause_id, symbol)] = None

    def discard(self, clause_id: str, symbol: str) -> None:
        self._edges.pop((clause_id, symbol), None)

    def has(self, clause_id: str, symbol: str) -> bool:
        return (clause_id, symbol) in self._edges

    def neighbors(self, clause_id: str) -> list:
        return [s for (c, s) in self._edges if c == clause_id]

    def clauses_of(self, symbol: str) -> list:
        return [c for (c, s) in self._edges if s == symbol]

    def drop_clause(self, clause_id: str) -> None:
        self._edges = {e: None for e in self._edges if e[0] != clause_id}

    def drop_symbol(self, symbol: str) -> None:
        self._edges = {e: None for e in self._edges if e[1] != symbol}


class State:
    """Modeling state for one problem. Mutating methods return ``self``."""

    def __init__(self, background: str = ""):
        self.background = background
        self.parameters: dict = {}
        self.variables: dict = {}
        self.clauses: dict = {}
        self.graph = ConnectionGraph()
        self.data_store: dict = {}

    # -- symbols ----------------------------------------------------------

    def has_symbol(self, symbol: str) -> bool:
        return symbol in self.parameters or symbol in self.variables

    def add_symbol(self, item) -> "State":
        if self.has_symbol(item.symbol):
            raise DuplicateSymbol(f"symbol '{item.symbol}' already registered")
        if item.symbol in self.clauses:
            raise DuplicateSymbol(f"'{item.symbol}' already names a clause")
        if isinstance(item, Parameter):
            self.parameters[item.symbol] = item
        elif isinstance(item, Variable):
            self.variables[item.symbol] = item
        else:
            raise TypeError(f"expected Parameter or Variable, got {type(item).__name__}")
        self._assert_invariants()
        return self

    def remove_symbol(self, symbol: str) -> "State":
        if symbol in self.parameters:
            del self.parameters[symbol]
        elif symbol in self.variables:
            del self.variables[symbol]
        else:
            raise UnknownSymbol(f"unknown symbol '{symbol}'")
        self.graph.drop_symbol(symbol)
        self.data_store.pop(symbol, None)
        return self

    def demote_parameter(self, symbol: str, vartype=VarType.CONTINUOUS) -> "State":
        """Turn a parameter into a decision variable, keeping its graph edges."""
        if symbol not in self.parameters:
            raise UnknownSymbol(f"'{symbol}' is not a parameter")
        p = self.parameters.pop(symbol)
        self.variables[symbol] = Variable(symbol, p.shape, p.definition, vartype)
        self.data_store.pop(symbol, None)
        return self

    def promote_variable(self, symbol: str) -> "State":
        """Turn a variable into a parameter, keeping its graph edges."""
        if symbol not in self.variables:
            raise UnknownSymbol(f"'{symbol}' is not a variable")
        v = self.variables.pop(symbol)
        self.parameters[symbol] = Parameter(symbol, v.shape, v.definition)
        return self

    # -- data -------------------------------------------------------------

    def bind_data(self, symbol: str, values) -> "State":
        if symbol not in self.parameters:
            raise UnknownSymbol(f"'{symbol}' is not a parameter; only parameters carry data")
        arr = np.asarray(values, dtype=float)
        shape = self.parameters[symbol].shape
        if arr.ndim != len(shape):
            raise ShapeMismatch(
                f"{symbol}: expected {len(shape)}-d data for shape {list(shape)}, got {arr.ndim}-d"
            )
        dims = self.resolve_dims(extra={})
        for axis, (dim, size) in enumerate(zip(shape, arr.shape)):
            if isinstance(dim, int):
                if size != dim:
                    raise ShapeMismatch(f"{symbol}: axis {axis} has length {size}, expected {dim}")
            elif dim in dims and dims[dim] != size:
                raise ShapeMismatch(
                    f"{symbol}: axis {axis} has length {size}, but dimension '{dim}' is {dims[dim]}"
                )
        self.data_store[symbol] = arr
        return self

    def resolve_dims(self, extra=None) -> dict:
        """Map named dimensions to concrete sizes.

        A named dimension is pinned by the bound data of any parameter using it,
        or by a scalar integer parameter of the same name. Conflicts raise
        ShapeMismatch.
        """
        dims: dict = {} if extra is None else dict(extra)
        for symbol, param in self.parameters.items():
            arr = self.data_store.get(symbol)
            if arr is None:
                continue
            for axis, dim in enumerate(param.shape):
                if isinstance(dim, int):
                    continue
                size = arr.shape[axis]
                if dim in dims and dims[dim] != size:
                    raise ShapeMismatch(
                        f"dimension '{dim}' is {dims[dim]} but {symbol} axis {axis} has {size}"
                    )
                dims[dim] = size
        for symbol, param in self.parameters.items():
            if param.shape or symbol in dims:
                continue
            arr = self.data_store.get(symbol)
            if arr is not None and float(arr) == int(arr) and int(arr) >= 0:
                # scalar integer parameter may name a dimension (e.g. K = 3)
                dims.setdefault(symbol, int(arr))
        return dims

    # -- clauses ----------------------------------------------------------

    def add_clause(self, clause: Clause) -> "State":
        if clause.id in self.clauses or self.has_symbol(clause.id):
            raise DuplicateSymbol(f"clause id '{clause.id}' already in use")
        self.clauses[clause.id] = clause
        return self

    def remove_clause(self, clause_id: str) -> "State":
        if clause_id not in self.clauses:
            raise UnknownClause(f"unknown clause '{clause_id}'")
        del self.clauses[clause_id]
        self.graph.drop_clause(clause_id)
        return self

    def objective_clause(self) -> Optional[Clause]:
        for c in self.clauses.values():
            if c.kind is ClauseKind.OBJECTIVE:
                return c
        return None

    def advance_clause(self, clause_id: str, status: ClauseStatus) -> "State":
        c = self._clause(clause_id)
        if status.rank < c.status.rank:
            raise StatusRegression(
                f"clause '{clause_id}' cannot move {c.status.value} -> {status.value}"
            )
        c.status = status
        return self

    def reset_clause(self, clause_id: str, status: ClauseStatus) -> "State":
        """Reset a clause to an earlier stage, dropping artifacts of later ones."""
        c = self._clause(clause_id)
        c.status = status
        if status.rank < ClauseStatus.CODED.rank:
            c.fragment = None
        if status.rank < ClauseStatus.FORMULATED.rank:
            c.formulation = None
            self.graph.drop_clause(clause_id)
        return self

    def _clause(self, clause_id: str) -> Clause:
        try:
            return self.clauses[clause_id]
        except KeyError:
            raise UnknownClause(f"unknown clause '{clause_id}'") from None

    # -- connection graph ---------------------------------------------------

    def connect(self, clause_id: str, symbol: str) -> "State":
        if clause_id not in self.clauses:
            raise UnknownClause(f"unknown clause '{clause_id}'")
        if not self.has_symbol(symbol):
            raise UnknownSymbol(f"unknown symbol '{symbol}'")
        self.graph.add(clause_id, symbol)
        self._assert_invariants()
        return self

    def context_for(self, clause_id: str) -> dict:
        """Parameters and variables adjacent to the clause, in insertion order."""
        if clause_id not in self.clauses:
            raise UnknownClause(f"unknown clause '{clause_id}'")
        neighborhood = set(self.graph.neighbors(clause_id))
        return {
            "parameters": [p for s, p in self.parameters.items() if s in neighborhood],
            "variables": [v for s, v in self.variables.items() if s in neighborhood],
        }

    # -- invariants ---------------------------------------------------------

    def _assert_invariants(self) -> None:
        overlap = self.parameters.keys() & self.variables.keys()
        assert not overlap, f"symbol registered as both parameter and variable: {overlap}"
        for clause_id, symbol in self.graph.edges:
            assert clause_id in self.clauses, f"edge references unknown clause '{clause_id}'"
            assert self.has_symbol(symbol), f"edge references unknown symbol '{symbol}'"
            assert symbol not in self.clauses, f"edge endpoint '{symbol}' is a clause"

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "background": self.background,
            "parameters": [
                {"symbol": p.symbol, "shape": list(p.shape), "definition": p.definition}
                for p in self.parameters.values()
            ],
            "variables": [
                {
                    "symbol": v.symbol,
                    "shape": list(v.shape),
                    "definition": v.definition,
                    "vartype": v.vartype.value,
                    "bounds": list(v.bounds) if v.bounds is not None else None,
                }
                for v in self.variables.values()
            ],
            "clauses": [
                {
                    "id": c.id,
                    "kind": c.kind.value,
                    "description": c.description,
                    "formulation": c.formulation,
                    "fragment": c.fragment,
                    "status": c.status.value,
                    "confidence": c.confidence,
                }
                for c in self.clauses.values()
            ],
            "graph": [[c, s] for c, s in self.graph.edges],
            "data": {s: np.asarray(a).tolist() for s, a in self.data_store.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_dict(cls, doc: dict) -> "State":
        return _state_from_dict(doc)

    @classmethod
    def loads(cls, text: str) -> "State":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("$", f"not valid JSON: {exc}") from None
        return _state_from_dict(doc)

    @classmethod
    def load(cls, path) -> "State":
        with open(path) as fh:
            return cls.loads(fh.read())

    # -- equality (structural) ----------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, State):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (
            f"State(params={len(self.parameters)}, vars={len(self.variables)}, "
            f"clauses={len(self.clauses)}, edges={len(self.graph)})"
        )


def _require(doc: dict, key: str, typ, path: str):
    if key not in doc:
        raise SchemaViolation(f"{path}.{key}", "missing required field")
    value = doc[key]
    if typ is not None and not isinstance(value, typ):
        raise SchemaViolation(f"{path}.{key}", f"expected {typ.__name__}, got {type(value).__name__}")
    return value


def _reject_unknown(doc: dict, allowed, path: str):
    for key in doc:
        if key not in allowed:
            raise SchemaViolation(f"{path}.{key}", "unknown field")


def _state_from_dict(doc) -> State:
    if not isinstance(doc, dict):
        raise SchemaViolation("$", "top level must be an object")
    _reject_unknown(
        doc, {"version", "background", "parameters", "variables", "clauses", "graph", "data"}, "$"
    )
    version = _require(doc, "version", int, "$")
    if version != SCHEMA_VERSION:
        raise SchemaViolation("$.version", f"unsupported schema version {version}")
    state = State(background=_require(doc, "background", str, "$"))

    for i, pd in enumerate(_require(doc, "parameters", list, "$")):
        path = f"$.parameters[{i}]"
        if not isinstance(pd, dict):
            raise SchemaViolation(path, "expected object")
        _reject_unknown(pd, {"symbol", "shape", "definition"}, path)
        try:
            state.add_symbol(
                Parameter(
                    _require(pd, "symbol", str, path),
                    tuple(_require(pd, "shape", list, path)),
                    _require(pd, "definition", str, path),
                )
            )
        except MilpforgeError as exc:
            raise SchemaViolation(path, str(exc)) from None

    for i, vd in enumerate(_require(doc, "variables", list, "$")):
        path = f"$.variables[{i}]"
        if not isinstance(vd, dict):
            raise SchemaViolation(path, "expected object")
        _reject_unknown(vd, {"symbol", "shape", "definition", "vartype", "bounds"}, path)
        bounds = vd.get("bounds")
        try:
            state.add_symbol(
                Variable(
                    _require(vd, "symbol", str, path),
                    tuple(_require(vd, "shape", list, path)),
                    _require(vd, "definition", str, path),
                    _require(vd, "vartype", str, path),
                    tuple(bounds) if bounds is not None else None,
                )
            )
        except (MilpforgeError, ValueError) as exc:
            raise SchemaViolation(path, str(exc)) from None

    for i, cd in enumerate(_require(doc, "clauses", list, "$")):
        path = f"$.clauses[{i}]"
        if not isinstance(cd, dict):
            raise SchemaViolation(path, "expected object")
        _reject_unknown(
            cd, {"id", "kind", "description", "formulation", "fragment", "status", "confidence"}, path
        )
        try:
            state.add_clause(
                Clause(
                    _require(cd, "id", str, path),
                    _require(cd, "kind", str, path),
                    _require(cd, "description", str, path),
                    cd.get("formulation"),
                    cd.get("fragment"),
                    cd.get("status", "Extracted"),
                    cd.get("confidence"),
                )
            )
        except (MilpforgeError, ValueError) as exc:
            raise SchemaViolation(path, str(exc)) from None

    for i, edge in enumerate(_require(doc, "graph", list, "$")):
        path = f"$.graph[{i}]"
        if not (isinstance(edge, list) and len(edge) == 2):
            raise SchemaViolation(path, "edge must be [clause_id, symbol]")
        clause_id, symbol = edge
        try:
            state.connect(clause_id, symbol)
        except MilpforgeError as exc:
            raise SchemaViolation(path, str(exc)) from None

    for symbol, values in _require(doc, "data", dict, "$").items():
        path = f"$.data.{symbol}"
        try:
            state.bind_data(symbol, values)
        except MilpforgeError as exc:
            raise SchemaViolation(path, str(exc)) from None

    return state
