"""LP-format emission and parsing.

The supported subset covers the sections Minimize/Maximize, Subject To,
Bounds, General, Binary, Semi-Continuous, and SOS, plus indicator rows in the
conditional arrow syntax (``z = 1 -> expr <= rhs``). The writer leads with a
``\\ columns:`` comment naming every column in order; our parser honors it so
that parse(write(model)) reproduces the model exactly, while files from other
tools fall back to first-appearance column order.

Piecewise-linear annotations have no LP-format section: the writer lowers them
(and nothing else) before emitting, so meeting one in the emit path is a bug.
"""

from __future__ import annotations

import math
import re

import numpy as np
import scipy.sparse as sp

from .errors import LpSyntaxError, UnrepresentableAnnotation
from .ir import (
    GroundIndicator,
    GroundModel,
    GroundPWL,
    GroundSOS,
    GroundSemiCont,
    lower_pwl,
)


def _num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(coeffs, col_names, zero_col=None) -> str:
    """Render {col: coeff} deterministically in column order."""
    parts = []
    for col in sorted(coeffs):
        v = coeffs[col]
        if v == 0.0:
            continue
        mag = _num(abs(v))
        lead = "-" if v < 0 else "+"
        parts.append((lead, f"{mag} {col_names[col]}"))
    if not parts:
        anchor = zero_col if zero_col is not None else 0
        return f"0 {col_names[anchor]}"
    first_lead, first_body = parts[0]
    text = ("- " if first_lead == "-" else "") + first_body
    for lead, body in parts[1:]:
        text += f" {lead} {body}"
    return text


def write_lp(model: GroundModel) -> str:
    """Emit the model as LP-format text with deterministic ordering."""
    model, _ = lower_pwl(model)
    for a in model.annotations:
        if isinstance(a, GroundPWL):
            raise UnrepresentableAnnotation("piecewise-linear annotation survived pre-lowering")

    lines = [f"\\ columns: {' '.join(model.col_names)}"]
    lines.append("Maximize" if model.sense == "maximize" else "Minimize")
    obj_coeffs = {j: model.c[j] for j in range(model.num_cols) if model.c[j] != 0.0}
    obj = _expr(obj_coeffs, model.col_names) if obj_coeffs else "0"
    if model.obj_const:
        sign = "+" if model.obj_const > 0 else "-"
        obj += f" {sign} {_num(abs(model.obj_const))}"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    csr = model.A.tocsr()
    for i in range(model.num_rows):
        coeffs = {
            int(j): float(v)
            for j, v in zip(
                csr.indices[csr.indptr[i]:csr.indptr[i + 1]],
                csr.data[csr.indptr[i]:csr.indptr[i + 1]],
            )
        }
        lines.append(
            f" {model.row_names[i]}: {_expr(coeffs, model.col_names)} "
            f"{model.senses[i]} {_num(model.b[i])}"
        )
    for k, ann in enumerate(a for a in model.annotations if isinstance(a, GroundIndicator)):
        lines.append(
            f" i{k}: {model.col_names[ann.trigger_col]} = {ann.trigger_value} -> "
            f"{_expr(ann.coeffs, model.col_names)} {ann.relation} {_num(ann.rhs)}"
        )
    lines.append("Bounds")
    for j, name in enumerate(model.col_names):
        lo, hi = model.lb[j], model.ub[j]
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" {name} free")
        elif math.isinf(hi):
            lines.append(f" {name} >= {_num(lo)}")
        elif math.isinf(lo):
            lines.append(f" {name} <= {_num(hi)}")
        else:
            lines.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    generals = [
        model.col_names[j]
        for j in range(model.num_cols)
        if model.integrality[j] and not (model.lb[j] == 0.0 and model.ub[j] == 1.0)
    ]
    binaries = [
        model.col_names[j]
        for j in range(model.num_cols)
        if model.integrality[j] and model.lb[j] == 0.0 and model.ub[j] == 1.0
    ]
    if generals:
        lines.append("General")
        lines.append(" " + " ".join(generals))
    if binaries:
        lines.append("Binary")
        lines.append(" " + " ".join(binaries))
    semis = [a for a in model.annotations if isinstance(a, GroundSemiCont)]
    if semis:
        lines.append("Semi-Continuous")
        lines.append(" " + " ".join(model.col_names[a.col] for a in semis))
    soss = [a for a in model.annotations if isinstance(a, GroundSOS)]
    if soss:
        lines.append("SOS")
        for k, ann in enumerate(soss):
            members = " ".join(
                f"{model.col_names[c]}:{_num(w)}" for c, w in zip(ann.members, ann.weights)
            )
            lines.append(f" s{k}: S{ann.kind} :: {members}")
    lines.append("End")
    return "\n".join(lines) + "\n"


# --- parsing -----------------------------------------------------------------

_SECTION_RE = re.compile(
    r"^(minimize|maximize|min|max|subject to|such that|st|s\.t\.|bounds|general|gen|"
    r"integers?|binary|binaries|bin|semi-continuous|semis|sos|end)\s*$",
    re.IGNORECASE,
)

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<op><=|>=|=<|=>|->|=|\+|-)"
    r"|(?P<name>[A-Za-z!\"#$%&(),;?@_'`{}|~.][A-Za-z0-9!\"#$%&(),;?@_'`{}|~.\[\]]*))"
)


def _tokens(text: str, line_no: int):
    out, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LpSyntaxError(line_no, pos + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return out


class _Expr:
    __slots__ = ("coeffs", "const")

    def __init__(self):
        self.coeffs = {}
        self.const = 0.0

    def add(self, name, value):
        self.coeffs[name] = self.coeffs.get(name, 0.0) + value


def _parse_expression(tokens, i, line_no):
    """Parse a linear expression from tokens[i:], stopping at a relation/arrow."""
    expr = _Expr()
    sign = 1.0
    pending: float | None = None
    while i < len(tokens):
        kind, value, col = tokens[i]
        if kind == "op" and value in ("<=", ">=", "=", "=<", "=>", "->"):
            break
        if kind == "op" and value in ("+", "-"):
            if pending is not None:
                expr.const += sign * pending
                pending = None
                sign = 1.0
            sign *= -1.0 if value == "-" else 1.0
            i += 1
            continue
        if kind == "num":
            if pending is not None:
                raise LpSyntaxError(line_no, col + 1, "two numbers in a row")
            pending = float(value)
            i += 1
            continue
        if kind == "name":
            expr.add(value, sign * (pending if pending is not None else 1.0))
            pending = None
            sign = 1.0
            i += 1
            continue
        raise LpSyntaxError(line_no, col + 1, f"unexpected token {value!r}")
    if pending is not None:
        expr.const += sign * pending
    return expr, i


def _relation(tokens, i, line_no):
    kind, value, col = tokens[i] if i < len(tokens) else ("eof", "", 0)
    rel = {"<=": "<=", "=<": "<=", ">=": ">=", "=>": ">=", "=": "="}.get(value)
    if kind != "op" or rel is None:
        raise LpSyntaxError(line_no, col + 1, "expected a comparison")
    return rel, i + 1


def parse_lp(text: str) -> GroundModel:
    """Parse LP-format text (the documented subset) into a GroundModel."""
    sense = None
    declared_columns: list | None = None
    obj = _Expr()
    rows = []  # (name, _Expr, relation, rhs)
    indicators = []  # (trigger name, value, _Expr, relation, rhs)
    bounds: dict = {}
    integers: set = set()
    semis: list = []
    soss: list = []  # (kind, [(name, weight)])
    section = None
    auto_row = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("\\"):
            body = line[1:].strip()
            if body.lower().startswith("columns:"):
                declared_columns = body[len("columns:"):].split()
            continue
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            word = m.group(1).lower()
            if word in ("minimize", "min"):
                sense, section = "minimize", "objective"
            elif word in ("maximize", "max"):
                sense, section = "maximize", "objective"
            elif word in ("subject to", "such that", "st", "s.t."):
                section = "rows"
            elif word == "bounds":
                section = "bounds"
            elif word in ("general", "gen", "integer", "integers"):
                section = "general"
            elif word in ("binary", "binaries", "bin"):
                section = "binary"
            elif word in ("semi-continuous", "semis"):
                section = "semi"
            elif word == "sos":
                section = "sos"
            else:
                section = "end"
            continue
        if section is None:
            raise LpSyntaxError(line_no, 1, "content before the objective section")
        if section == "end":
            raise LpSyntaxError(line_no, 1, "content after End")

        if section == "objective":
            body = line
            label = re.match(r"^([^\s:]+)\s*:(?!:)", body)
            if label:
                body = body[label.end():]
            tokens = _tokens(body, line_no)
            expr, i = _parse_expression(tokens, 0, line_no)
            if i != len(tokens):
                raise LpSyntaxError(line_no, 1, "unexpected trailing tokens in objective")
            for name, v in expr.coeffs.items():
                obj.add(name, v)
            obj.const += expr.const
            continue

        if section == "rows":
            name = None
            body = line
            label = re.match(r"^([^\s:]+)\s*:", body)
            if label and "->" not in label.group(1):
                name = label.group(1)
                body = body[label.end():]
            if name is None:
                name = f"r{auto_row}"
            auto_row += 1
            tokens = _tokens(body, line_no)
            arrow = next((k for k, t in enumerate(tokens) if t[1] == "->"), None)
            if arrow is not None:
                head = tokens[:arrow]
                if (
                    len(head) != 3
                    or head[0][0] != "name"
                    or head[1][1] != "="
                    or head[2][0] != "num"
                ):
                    raise LpSyntaxError(line_no, 1, "indicator head must be 'name = 0|1 ->'")
                trig_val = int(float(head[2][1]))
                if trig_val not in (0, 1):
                    raise LpSyntaxError(line_no, 1, "indicator trigger value must be 0 or 1")
                expr, i = _parse_expression(tokens, arrow + 1, line_no)
                rel, i = _relation(tokens, i, line_no)
                rhs, i = _parse_expression(tokens, i, line_no)
                if rhs.coeffs or i != len(tokens):
                    raise LpSyntaxError(line_no, 1, "indicator right side must be a constant")
                indicators.append((head[0][1], trig_val, expr, rel, rhs.const - expr.const))
                expr.const = 0.0
                continue
            expr, i = _parse_expression(tokens, 0, line_no)
            rel, i = _relation(tokens, i, line_no)
            rhs, i = _parse_expression(tokens, i, line_no)
            if i != len(tokens):
                raise LpSyntaxError(line_no, 1, "unexpected trailing tokens")
            if rhs.coeffs:
                for nm, v in rhs.coeffs.items():
                    expr.add(nm, -v)
            rows.append((name, expr, rel, rhs.const - expr.const))
            expr.const = 0.0
            continue

        if section == "bounds":
            tokens = _tokens(line, line_no)
            names = [t for t in tokens if t[0] == "name"]
            if len(names) == 1 and names[0][1].lower() == "free":
                raise LpSyntaxError(line_no, 1, "free line needs a variable name")
            if len(tokens) == 2 and tokens[1][1].lower() == "free" and tokens[0][0] == "name":
                bounds[tokens[0][1]] = (-math.inf, math.inf)
                continue
            # forms: v >= n | v <= n | n <= v | n <= v <= n | v = n
            def tval(t):
                s = 1.0
                k = 0
                while tokens[t + k][1] in ("-", "+"):
                    s *= -1.0 if tokens[t + k][1] == "-" else 1.0
                    k += 1
                return s * float(tokens[t + k][1]), t + k + 1

            try:
                if tokens[0][0] == "name":
                    name = tokens[0][1]
                    rel, i = _relation(tokens, 1, line_no)
                    value, i = tval(i)
                    lo, hi = bounds.get(name, (0.0, math.inf))
                    if rel == "<=":
                        bounds[name] = (lo, value)
                    elif rel == ">=":
                        bounds[name] = (value, hi)
                    else:
                        bounds[name] = (value, value)
                else:
                    value, i = tval(0)
                    rel, i = _relation(tokens, i, line_no)
                    if rel != "<=" or tokens[i][0] != "name":
                        raise LpSyntaxError(line_no, 1, "unsupported bound form")
                    name = tokens[i][1]
                    i += 1
                    lo, hi = bounds.get(name, (0.0, math.inf))
                    if i < len(tokens):
                        rel2, i = _relation(tokens, i, line_no)
                        if rel2 != "<=":
                            raise LpSyntaxError(line_no, 1, "unsupported bound form")
                        hi, i = tval(i)
                    bounds[name] = (value, hi)
                if i != len(tokens):
                    raise LpSyntaxError(line_no, 1, "unexpected trailing tokens in bound")
            except IndexError:
                raise LpSyntaxError(line_no, len(line), "truncated bound line") from None
            continue

        if section in ("general", "binary", "semi"):
            for kind, value, col in _tokens(line, line_no):
                if kind != "name":
                    raise LpSyntaxError(line_no, col + 1, "expected variable names")
                if section == "general":
                    integers.add(value)
                elif section == "binary":
                    integers.add(value)
                    bounds.setdefault(value, (0.0, 1.0))
                else:
                    semis.append(value)
            continue

        if section == "sos":
            body = line
            label = re.match(r"^([^\s:]+)\s*:(?!:)", body)
            if label:
                body = body[label.end():]
            m2 = re.match(r"\s*S([12])\s*::", body)
            if not m2:
                raise LpSyntaxError(line_no, 1, "SOS line needs 'S1 ::' or 'S2 ::'")
            kind = int(m2.group(1))
            members = []
            for piece in body[m2.end():].split():
                if ":" not in piece:
                    raise LpSyntaxError(line_no, 1, f"SOS member '{piece}' needs name:weight")
                nm, w = piece.rsplit(":", 1)
                members.append((nm, float(w)))
            soss.append((kind, members))
            continue

    if sense is None:
        raise LpSyntaxError(1, 1, "missing objective section")

    order: list = []
    seen = set()

    def note(name):
        if name not in seen:
            seen.add(name)
            order.append(name)

    if declared_columns is not None:
        for name in declared_columns:
            note(name)
    for name in obj.coeffs:
        note(name)
    for _, expr, _, _ in rows:
        for name in expr.coeffs:
            note(name)
    for trig, _, expr, _, _ in indicators:
        note(trig)
        for name in expr.coeffs:
            note(name)
    for name in bounds:
        note(name)
    for name in integers:
        note(name)
    for name in semis:
        note(name)
    for _, members in soss:
        for name, _ in members:
            note(name)

    col_index = {name: j for j, name in enumerate(order)}
    n = len(order)
    c = np.zeros(n)
    for name, v in obj.coeffs.items():
        c[col_index[name]] = v
    lb = np.zeros(n)
    ub = np.full(n, math.inf)
    for name, (lo, hi) in bounds.items():
        lb[col_index[name]] = lo
        ub[col_index[name]] = hi
    integrality = np.zeros(n, dtype=int)
    for name in integers:
        integrality[col_index[name]] = 1

    data, ri, ci = [], [], []
    b, senses, row_names = [], [], []
    for i, (name, expr, rel, rhs) in enumerate(rows):
        for nm, v in expr.coeffs.items():
            if v != 0.0:
                data.append(v)
                ri.append(i)
                ci.append(col_index[nm])
        b.append(rhs)
        senses.append(rel)
        row_names.append(name)

    annotations: list = []
    for trig, val, expr, rel, rhs in indicators:
        annotations.append(
            GroundIndicator(
                trigger_col=col_index[trig],
                trigger_value=val,
                coeffs={col_index[nm]: v for nm, v in expr.coeffs.items() if v != 0.0},
                relation=rel,
                rhs=rhs,
            )
        )
    for name in semis:
        annotations.append(GroundSemiCont(col=col_index[name]))
    for kind, members in soss:
        annotations.append(
            GroundSOS(
                kind=kind,
                members=[col_index[nm] for nm, _ in members],
                weights=[w for _, w in members],
            )
        )

    return GroundModel(
        sense=sense,
        c=c,
        obj_const=obj.const,
        A=sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n)),
        b=np.array(b, dtype=float),
        senses=senses,
        lb=lb,
        ub=ub,
        integrality=integrality,
        col_names=order,
        row_names=row_names,
        annotations=annotations,
    )
