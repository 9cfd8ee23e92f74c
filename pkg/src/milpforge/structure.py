"""Structure detection: iterate the structure pool over a formulated model,
verify LLM proposals deterministically, and run the problem-class advisory.

The verification layer is the load-bearing part: a proposal only becomes an
annotation after structural checks pass, so adversarial or sloppy transcripts
cannot corrupt the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import MilpforgeError
from .ir import (
    IndicatorAnnotation,
    MemberSpec,
    PiecewiseLinearAnnotation,
    Ref,
    SOSAnnotation,
    SemiContinuousAnnotation,
    build_fragment,
)
from .state import State, VarType

STRUCTURE_SCHEMA = {"type": "object", "required": ["applicable"],
                    "properties": {"applicable": {"type": "boolean"},
                                   "proposals": {"type": "array"}}}
CLASSIFY_SCHEMA = {"type": "object", "required": ["detected"],
                   "properties": {"detected": {"type": "string"}}}

PROBLEM_CLASSES = ("TSP", "SAT", "NetworkFlow", "Routing", "Regression", "None")


@dataclass
class StructureTemplate:
    kind: str
    description: str
    example: str
    question: str


def load_structure_pool(path=None) -> list:
    path = Path(path) if path else Path(__file__).parent / "registries" / "structure_pool.json"
    pool = [StructureTemplate(**entry) for entry in json.loads(path.read_text())]
    kinds = [t.kind for t in pool]
    if len(set(kinds)) != len(kinds):
        raise ValueError("duplicate structure kinds in pool")
    return pool


@dataclass
class StructureProposal:
    kind: str
    payload: dict
    confidence: int = 1
    replaces: list = field(default_factory=list)


@dataclass
class ProblemClassAdvisory:
    detected: str
    rationale: str = ""
    suggestion: str = ""

    def __post_init__(self):
        if self.detected not in PROBLEM_CLASSES:
            raise ValueError(f"unknown problem class '{self.detected}'")


def _ref_from_payload(doc: dict) -> Ref:
    indices = []
    for entry in doc.get("index", []):
        if isinstance(entry, int):
            indices.append(("lit", entry))
        else:
            indices.append(("idx", str(entry)))
    return Ref(symbol=str(doc["var"]), indices=tuple(indices))


def _expand_from_payload(entries) -> list:
    out = []
    for name, size in entries or []:
        out.append((str(name), (size if isinstance(size, int) else str(size),)))
    return out


def proposal_to_annotation(proposal: StructureProposal, state: State):
    """Convert a proposal payload into an annotation object (may raise)."""
    payload = proposal.payload
    kind = proposal.kind
    if kind in ("SOS1", "SOS2"):
        members = []
        for m in payload["members"]:
            members.append(MemberSpec(ref=_ref_from_payload(m),
                                      over=_expand_from_payload(m.get("over"))))
        return SOSAnnotation(kind=1 if kind == "SOS1" else 2, members=members,
                             expand=_expand_from_payload(payload.get("expand")))
    if kind == "Indicator":
        expand = _expand_from_payload(payload.get("expand"))
        text = payload["constraint"]
        if expand:
            text = f"{text} forall {', '.join(name for name, _ in expand)}"
        context = {"parameters": state.parameters, "variables": state.variables}
        fragment = build_fragment("indicator", text, context)
        terms = list(fragment.lhs_terms)
        for t in fragment.rhs_terms:
            terms.append(type(t)(scale=-t.scale, param=t.param, var=t.var, sum_over=t.sum_over))
        return IndicatorAnnotation(
            trigger=_ref_from_payload(payload["trigger"]),
            trigger_value=int(payload.get("trigger_value", 1)),
            terms=terms,
            const=fragment.lhs_const,
            relation=fragment.relation,
            rhs=fragment.rhs_const,
            expand=expand,
            big_m=payload.get("big_m"),
        )
    if kind == "SemiContinuous":
        return SemiContinuousAnnotation(
            ref=_ref_from_payload(payload["var"]),
            lower=float(payload["lower"]),
            upper=float(payload["upper"]),
            expand=_expand_from_payload(payload.get("expand")),
        )
    if kind == "PiecewiseLinear":
        return PiecewiseLinearAnnotation(
            x=_ref_from_payload(payload["x"]),
            y=_ref_from_payload(payload["y"]),
            breakpoints=[(float(a), float(b)) for a, b in payload["breakpoints"]],
            expand=_expand_from_payload(payload.get("expand")),
        )
    raise ValueError(f"unknown structure kind '{kind}'")


def _member_count(ann: SOSAnnotation, dims: dict) -> Optional[int]:
    total = 0
    for spec in ann.members:
        count = 1
        for _, exprs in spec.over:
            expr = exprs[0]
            if isinstance(expr, int):
                count *= expr
            elif expr in dims:
                count *= dims[expr]
            else:
                return None  # unresolvable until data arrives
        total += count
    return total


def verify_proposal(state: State, proposal: StructureProposal):
    """Deterministic guard over a proposal. Returns (accepted, reason)."""
    try:
        ann = proposal_to_annotation(proposal, state)
    except (MilpforgeError, KeyError, ValueError, TypeError) as exc:
        return False, f"malformed proposal: {exc}"

    for cid in proposal.replaces:
        if cid not in state.clauses:
            return False, f"replaced clause '{cid}' does not exist"

    def var_of(ref: Ref):
        return state.variables.get(ref.symbol)

    def arity_ok(ref: Ref, extra_indices) -> bool:
        decl = var_of(ref)
        return decl is not None and len(ref.indices) == len(decl.shape)

    try:
        dims = state.resolve_dims()
    except MilpforgeError:
        dims = {}

    if isinstance(ann, SOSAnnotation):
        for spec in ann.members:
            if var_of(spec.ref) is None:
                return False, f"member '{spec.ref.symbol}' is not a variable"
            if not arity_ok(spec.ref, spec.over):
                return False, f"member '{spec.ref.symbol}' subscripted with the wrong arity"
        count = _member_count(ann, dims)
        if count is not None and count < 2:
            return False, f"needs >=2 members, got {count}"
        forced = [
            spec.ref.symbol
            for spec in ann.members
            if (v := var_of(spec.ref)).bounds is not None
            and v.bounds[0] is not None
            and v.bounds[0] > 0
        ]
        if len(forced) >= ann.kind:
            return False, (
                f"members {forced} have fixed nonzero lower bounds; "
                f"at most {ann.kind - 1} may be forced nonzero in an SOS{ann.kind}"
            )
        return True, "ok"
    if isinstance(ann, IndicatorAnnotation):
        trigger = var_of(ann.trigger)
        if trigger is None:
            return False, f"trigger '{ann.trigger.symbol}' is not a variable"
        if trigger.vartype is not VarType.BINARY:
            return False, "trigger not binary"
        if ann.trigger_value not in (0, 1):
            return False, f"trigger value must be 0 or 1, got {ann.trigger_value}"
        for t in ann.terms:
            if t.var is not None and var_of(t.var) is None:
                return False, f"implied constraint references unknown variable '{t.var.symbol}'"
        return True, "ok"
    if isinstance(ann, SemiContinuousAnnotation):
        if var_of(ann.ref) is None:
            return False, f"'{ann.ref.symbol}' is not a variable"
        if not (0 < ann.lower <= ann.upper):
            return False, f"needs 0 < lower <= upper, got ({ann.lower}, {ann.upper})"
        return True, "ok"
    if isinstance(ann, PiecewiseLinearAnnotation):
        for ref in (ann.x, ann.y):
            if var_of(ref) is None:
                return False, f"'{ref.symbol}' is not a variable"
        xs = [p[0] for p in ann.breakpoints]
        if len(xs) < 2 or any(b <= a for a, b in zip(xs, xs[1:])):
            return False, "breakpoints must be strictly increasing in x"
        return True, "ok"
    return False, f"unknown annotation type {type(ann).__name__}"


def detect_structures(state: State, gateway, pool=None, log=None) -> list:
    """One LLM query per structure template; collect proposals with confidence.

    Gateway errors skip the template with a logged warning instead of failing
    the stage.
    """
    from .llm import confidence_of

    pool = pool or load_structure_pool()
    variables = "\n".join(
        f"{v.symbol} shape {list(v.shape)} ({v.vartype.value}"
        + (f", bounds {list(v.bounds)}" if v.bounds is not None else "")
        + f"): {v.definition}"
        for v in state.variables.values()
    ) or "(none)"
    clauses = "\n".join(
        f"{c.id} ({c.kind.value}): {c.description}\n  formulation: {c.formulation}"
        for c in state.clauses.values()
        if c.formulation
    ) or "(none)"
    proposals = []
    for template in pool:
        try:
            response = gateway.ask("structure_detect", {
                "structure_kind": template.kind,
                "structure_description": template.description,
                "structure_example": template.example,
                "structure_question": template.question,
                "variables": variables,
                "clauses": clauses,
            }, STRUCTURE_SCHEMA)
        except MilpforgeError as exc:
            if log:
                log("Formulate", "structure", "warning",
                    detail=f"{template.kind} detection skipped: {exc}")
            continue
        if not response.payload.get("applicable"):
            continue
        for doc in response.payload.get("proposals", []):
            if not isinstance(doc, dict) or "kind" not in doc:
                continue
            proposals.append(StructureProposal(
                kind=str(doc["kind"]),
                payload=doc,
                confidence=confidence_of(response),
                replaces=[str(x) for x in doc.get("replaces", [])],
            ))
    return proposals


def classify_problem(description: str, gateway, log=None) -> ProblemClassAdvisory:
    """Advisory-only problem-class screening; never touches the model."""
    try:
        response = gateway.ask("classify_problem", {"description": description},
                               CLASSIFY_SCHEMA)
    except MilpforgeError as exc:
        if log:
            log("Formulate", "advisory", "warning", detail=f"classification failed: {exc}")
        return ProblemClassAdvisory(detected="None", rationale=f"classification failed: {exc}")
    detected = response.payload.get("detected", "None")
    if detected not in PROBLEM_CLASSES:
        detected = "None"
    return ProblemClassAdvisory(
        detected=detected,
        rationale=str(response.payload.get("rationale", "")),
        suggestion=str(response.payload.get("suggestion", "")),
    )
