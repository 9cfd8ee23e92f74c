"""Reflective audits, confidence-based escalation, and feedback application.

A registry of per-stage audit questions runs after each pipeline stage; every
revision they trigger is applied to the state and logged as a correction
event. Low-confidence items either go to a stronger backend for a
keep/remove/modify verdict, to a human review queue, or (when routing is off)
are merely flagged.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    InvalidPayload,
    MilpforgeError,
    TranscriptMiss,
    TransportError,
    UnknownTarget,
)
from .state import Clause, ClauseKind, ClauseStatus, State, VarType

REFLECT_SCHEMA = {"type": "object", "required": ["verdict"],
                  "properties": {"verdict": {"type": "string"}}}
ESCALATE_SCHEMA = {"type": "object", "required": ["action"],
                   "properties": {"action": {"type": "string"}}}

_SYMBOL_SCAN_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*")


@dataclass
class ReflectivePrompt:
    id: str
    stage: str  # ParamExtraction | ClauseExtraction | ClauseModeling | VariableCheck
    question: str
    scope: str = "item"  # 'item' | 'collection'

    def __post_init__(self):
        if self.stage not in ("ParamExtraction", "ClauseExtraction", "ClauseModeling",
                              "VariableCheck"):
            raise ValueError(f"unknown reflective stage '{self.stage}'")
        if self.scope not in ("item", "collection"):
            raise ValueError(f"unknown scope '{self.scope}'")


def load_reflective_registry(path=None) -> list:
    path = Path(path) if path else Path(__file__).parent / "registries" / "reflective_prompts.json"
    entries = json.loads(path.read_text())
    registry = [ReflectivePrompt(**entry) for entry in entries]
    ids = [p.id for p in registry]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate reflective prompt ids")
    return registry


@dataclass
class EscalationPolicy:
    threshold: int = 4
    route: str = "Off"  # 'User' | 'StrongBackend' | 'Off'

    def __post_init__(self):
        if not 1 <= self.threshold <= 5:
            raise ValueError("threshold must be within 1..5")
        if self.route not in ("User", "StrongBackend", "Off"):
            raise ValueError(f"unknown escalation route '{self.route}'")

    def fires(self, confidence: int) -> bool:
        return confidence < self.threshold


@dataclass
class FeedbackDecision:
    target_id: str
    action: str  # 'keep' | 'remove' | 'modify'
    payload: Optional[dict] = None
    author: str = "Human"  # 'Human' | 'StrongBackend'
    rationale: str = ""

    def __post_init__(self):
        if self.action not in ("keep", "remove", "modify"):
            raise InvalidPayload(f"unknown feedback action '{self.action}'")
        if self.action == "modify" and not isinstance(self.payload, dict):
            raise InvalidPayload("modify needs a payload object")


@dataclass
class PendingReview:
    id: str
    item_kind: str
    item_id: str
    confidence: int
    reason: str = "low confidence"
    resolved: bool = False
    decision: Optional[dict] = None


def scan_symbols(text: str, state: State) -> list:
    """Known symbols mentioned in a formulation, in order of first mention."""
    seen = []
    for token in _SYMBOL_SCAN_RE.findall(text or ""):
        if state.has_symbol(token) and token not in seen:
            seen.append(token)
    return seen


class ErrorCorrector:
    """Audit/escalation engine shared by the pipeline and the service."""

    def __init__(self, gateway, policy: EscalationPolicy, log,
                 strong_gateway=None, registry=None, passes: int = 1):
        self.gateway = gateway
        self.strong_gateway = strong_gateway
        self.policy = policy
        self.log = log
        self.registry = registry if registry is not None else load_reflective_registry()
        self.passes = passes
        self.reviews: list = []
        self.stage = "Review"  # pipeline stage on whose behalf we are acting

    def _log(self, kind, outcome, detail="", fingerprint=None):
        self.log(self.stage, kind, outcome, detail=detail, fingerprint=fingerprint)

    # -- reflection --------------------------------------------------------

    def reflect(self, state: State, stage: str, doc=None) -> State:
        """Run every registered audit for a stage, applying revise verdicts."""
        prompts = [p for p in self.registry if p.stage == stage]
        for _ in range(max(1, self.passes)):
            for prompt in prompts:
                if prompt.scope == "collection":
                    self._reflect_collection(state, prompt, doc)
                else:
                    # snapshot first: revisions mutate the underlying collections
                    for kind, item_id, item_text in list(self._targets(state, prompt.stage)):
                        self._reflect_item(state, prompt, kind, item_id, item_text, doc)
        return state

    def _targets(self, state: State, stage: str):
        if stage == "ParamExtraction":
            for p in state.parameters.values():
                yield "parameter", p.symbol, f"{p.symbol} shape {list(p.shape)}: {p.definition}"
        elif stage == "VariableCheck":
            for v in state.variables.values():
                yield ("variable", v.symbol,
                       f"{v.symbol} shape {list(v.shape)} ({v.vartype.value}): {v.definition}")
        elif stage == "ClauseExtraction":
            for c in state.clauses.values():
                if c.kind is ClauseKind.CONSTRAINT:
                    yield "clause", c.id, f"{c.id}: {c.description}"
        elif stage == "ClauseModeling":
            for c in state.clauses.values():
                if c.formulation:
                    yield "clause", c.id, f"{c.id}: {c.description}\nformulation: {c.formulation}"

    def _reflect_item(self, state, prompt, kind, item_id, item_text, doc):
        question = prompt.question.replace("${symbol}", item_id)
        response = self.gateway.ask("reflect_item", {
            "background": state.background,
            "question": question,
            "item_kind": kind,
            "item": item_text,
            "context": summarize_symbols(state),
        }, REFLECT_SCHEMA)
        self._log("prompt", "ok", detail=f"reflect {prompt.id} on {item_id}",
                  fingerprint=response.fingerprint)
        verdict = response.payload.get("verdict")
        if verdict != "revise":
            return
        action = response.payload.get("action") or {}
        self._apply_revision(state, prompt, kind, item_id, action, doc)

    def _reflect_collection(self, state, prompt, doc):
        items = [c for c in state.clauses.values() if c.kind is ClauseKind.CONSTRAINT]
        if not items:
            return
        listing = "\n".join(f"{c.id}: {c.description}" for c in items)
        response = self.gateway.ask("reflect_collection", {
            "background": state.background,
            "question": prompt.question,
            "items": listing,
        }, REFLECT_SCHEMA)
        self._log("prompt", "ok", detail=f"reflect {prompt.id} on clause list",
                  fingerprint=response.fingerprint)
        if response.payload.get("verdict") != "revise":
            return
        action = response.payload.get("action") or {}
        if action.get("kind") != "drop_items":
            self._log("correction", "skipped",
                     detail=f"{prompt.id}: unsupported collection action {action.get('kind')}")
            return
        for cid in action.get("ids", []):
            if cid in state.clauses and state.clauses[cid].kind is ClauseKind.CONSTRAINT:
                state.remove_clause(cid)
                if doc is not None:
                    _drop_fragment(doc, cid)
                self._log("correction", "applied",
                         detail=f"{prompt.id}: dropped redundant clause {cid}")

    def _apply_revision(self, state, prompt, kind, item_id, action, doc):
        akind = action.get("kind")
        applied = None
        if akind == "demote_to_variable" and item_id in state.parameters:
            state.demote_parameter(item_id, VarType(action.get("vartype", "Continuous")))
            applied = f"parameter {item_id} is actually a variable"
        elif akind == "promote_to_parameter" and item_id in state.variables:
            state.promote_variable(item_id)
            applied = f"variable {item_id} is actually a parameter"
        elif akind == "drop_clause" and item_id in state.clauses:
            if state.clauses[item_id].kind is ClauseKind.OBJECTIVE:
                self._log("correction", "skipped",
                         detail=f"{prompt.id}: refusing to drop the objective")
                return
            state.remove_clause(item_id)
            if doc is not None:
                _drop_fragment(doc, item_id)
            applied = f"dropped clause {item_id}"
        elif akind == "rewrite_formulation" and item_id in state.clauses:
            rewrite_formulation(state, item_id, action.get("formulation", ""), doc)
            applied = f"rewrote formulation of {item_id}"
        elif akind == "rewrite_description" and item_id in state.clauses:
            state.clauses[item_id].description = action.get("description", "")
            state.reset_clause(item_id, ClauseStatus.EXTRACTED)
            if doc is not None:
                _drop_fragment(doc, item_id)
            applied = f"rewrote description of {item_id}"
        if applied:
            self._log("correction", "applied", detail=f"{prompt.id}: {applied}")
        else:
            self._log("correction", "skipped",
                     detail=f"{prompt.id}: action {akind!r} not applicable to {item_id}")

    # -- escalation ----------------------------------------------------------

    def escalate(self, state: State, item_kind: str, item_id: str, confidence: int,
                 original: str, doc=None) -> FeedbackDecision:
        """Route a low-confidence item per policy. Fires iff confidence < threshold."""
        if not self.policy.fires(confidence):
            return FeedbackDecision(item_id, "keep", author="StrongBackend",
                                    rationale="confidence at or above threshold")
        if self.policy.route == "StrongBackend" and self.strong_gateway is not None:
            try:
                response = self.strong_gateway.ask("escalate_review", {
                    "background": state.background,
                    "item_kind": item_kind,
                    "item_id": item_id,
                    "item": self._render_item(state, item_kind, item_id),
                    "original": original,
                    "context": summarize_symbols(state),
                }, ESCALATE_SCHEMA)
                self._log("prompt", "ok", detail=f"escalate {item_id} to strong backend",
                          fingerprint=response.fingerprint)
            except (TransportError, TranscriptMiss) as exc:
                self._log("escalation", "fallback",
                         detail=f"strong backend unavailable ({exc}); queued for review")
                self._queue_review(item_kind, item_id, confidence, "strong backend unavailable")
                return FeedbackDecision(item_id, "keep", author="StrongBackend",
                                        rationale="strong backend unavailable")
            decision = FeedbackDecision(
                target_id=item_id,
                action=response.payload["action"],
                payload=response.payload.get("payload"),
                author="StrongBackend",
                rationale=response.payload.get("rationale", ""),
            )
            self._log("escalation", "strong",
                     detail=f"{item_kind} {item_id}: {decision.action}")
            self.apply_feedback(state, decision, doc)
            return decision
        # User route and Off both leave the item in place; User queues it.
        reason = "low confidence" if self.policy.route == "User" else "low confidence (routing off)"
        self._queue_review(item_kind, item_id, confidence, reason)
        self.log("Escalate", "escalation",
                 "queued" if self.policy.route == "User" else "flagged",
                 detail=f"{item_kind} {item_id}: confidence {confidence}")
        return FeedbackDecision(item_id, "keep", author="Human", rationale=reason)

    def _queue_review(self, item_kind, item_id, confidence, reason):
        self.reviews.append(PendingReview(
            id=f"rev{len(self.reviews) + 1}",
            item_kind=item_kind,
            item_id=item_id,
            confidence=confidence,
            reason=reason,
        ))

    def _render_item(self, state: State, item_kind: str, item_id: str) -> str:
        if item_kind == "clause" and item_id in state.clauses:
            c = state.clauses[item_id]
            return f"{c.id} ({c.kind.value}): {c.description}\nformulation: {c.formulation}"
        if item_id in state.parameters:
            p = state.parameters[item_id]
            return f"{p.symbol} shape {list(p.shape)}: {p.definition}"
        if item_id in state.variables:
            v = state.variables[item_id]
            return f"{v.symbol} shape {list(v.shape)} ({v.vartype.value}): {v.definition}"
        return item_id

    # -- feedback ------------------------------------------------------------

    def apply_feedback(self, state: State, decision: FeedbackDecision, doc=None) -> State:
        """Apply a keep/remove/modify decision, resetting downstream statuses."""
        target = decision.target_id
        if decision.action == "keep":
            self._log("feedback", "keep", detail=f"{target}: kept")
            return state
        if target in state.clauses:
            self._feedback_clause(state, decision, doc)
        elif state.has_symbol(target):
            self._feedback_symbol(state, decision, doc)
        else:
            raise UnknownTarget(f"no clause or symbol named '{target}'")
        return state

    def _feedback_clause(self, state, decision, doc):
        target = decision.target_id
        if decision.action == "remove":
            state.remove_clause(target)
            if doc is not None:
                _drop_fragment(doc, target)
            self._log("feedback", "remove", detail=f"clause {target} removed")
            return
        payload = decision.payload or {}
        unknown = set(payload) - {"description", "formulation"}
        if unknown:
            raise InvalidPayload(f"clause modify does not accept {sorted(unknown)}")
        if "description" in payload:
            if not isinstance(payload["description"], str):
                raise InvalidPayload("description must be a string")
            state.clauses[target].description = payload["description"]
            state.reset_clause(target, ClauseStatus.EXTRACTED)
            if doc is not None:
                _drop_fragment(doc, target)
        if "formulation" in payload:
            if not isinstance(payload["formulation"], str):
                raise InvalidPayload("formulation must be a string")
            rewrite_formulation(state, target, payload["formulation"], doc)
        self._log("feedback", "modify", detail=f"clause {target} modified")

    def _feedback_symbol(self, state, decision, doc):
        target = decision.target_id
        dependents = state.graph.clauses_of(target)
        if decision.action == "remove":
            state.remove_symbol(target)
            for cid in dependents:
                if cid in state.clauses:
                    state.reset_clause(cid, ClauseStatus.EXTRACTED)
                    if doc is not None:
                        _drop_fragment(doc, cid)
            self._log("feedback", "remove",
                     detail=f"symbol {target} removed; {len(dependents)} clause(s) reset")
            return
        payload = decision.payload or {}
        unknown = set(payload) - {"definition", "shape", "vartype", "bounds"}
        if unknown:
            raise InvalidPayload(f"symbol modify does not accept {sorted(unknown)}")
        item = state.parameters.get(target) or state.variables[target]
        if "definition" in payload:
            item.definition = str(payload["definition"])
        if "shape" in payload:
            try:
                item.shape = tuple(payload["shape"])
                item.__post_init__()
            except MilpforgeError as exc:
                raise InvalidPayload(str(exc)) from None
        if "vartype" in payload:
            if target not in state.variables:
                raise InvalidPayload("vartype applies to variables only")
            try:
                item.vartype = VarType(payload["vartype"])
            except ValueError as exc:
                raise InvalidPayload(str(exc)) from None
        if "bounds" in payload:
            if target not in state.variables:
                raise InvalidPayload("bounds apply to variables only")
            item.bounds = tuple(payload["bounds"]) if payload["bounds"] is not None else None
            item.__post_init__()
        for cid in dependents:
            if cid in state.clauses and state.clauses[cid].status is ClauseStatus.CODED:
                state.reset_clause(cid, ClauseStatus.FORMULATED)
                if doc is not None:
                    _drop_fragment(doc, cid)
        self._log("feedback", "modify",
                 detail=f"symbol {target} modified; dependent fragments dropped")


def rewrite_formulation(state: State, clause_id: str, formulation: str, doc=None) -> None:
    """Replace a clause formulation: stale edges out, scanned edges in."""
    clause = state.clauses[clause_id]
    state.graph.drop_clause(clause_id)
    clause.formulation = formulation
    clause.fragment = None
    clause.status = ClauseStatus.FORMULATED
    for symbol in scan_symbols(formulation, state):
        state.connect(clause_id, symbol)
    if doc is not None:
        _drop_fragment(doc, clause_id)


def _drop_fragment(doc, clause_id: str) -> None:
    stale = [fid for fid, frag in doc.fragments.items()
             if getattr(frag, "id", None) == clause_id]
    for fid in stale:
        del doc.fragments[fid]


def summarize_symbols(state: State) -> str:
    """Prompt-visible listing of all declared symbols (descriptors only)."""
    lines = []
    for p in state.parameters.values():
        shape = f" shape {list(p.shape)}" if p.shape else ""
        lines.append(f"parameter {p.symbol}{shape}: {p.definition}")
    for v in state.variables.values():
        shape = f" shape {list(v.shape)}" if v.shape else ""
        lines.append(f"variable {v.symbol}{shape} ({v.vartype.value}): {v.definition}")
    return "\n".join(lines) if lines else "(none yet)"
