"""Staged modeling workflow: extract parameters -> extract clauses ->
formulate -> code -> assemble -> solve, with an iterative debug loop.

Every LLM exchange, correction, and solve lands in the event log, one JSON
object per event, so runs replay deterministically from a transcript and the
service can audit them.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .correction import (
    ErrorCorrector,
    EscalationPolicy,
    load_reflective_registry,
    rewrite_formulation,
    scan_symbols,
    summarize_symbols,
)
from .errors import (
    DebugExhausted,
    MilpforgeError,
    NoObjectiveFound,
    ObjectiveConflict,
    ParseError,
    StagePrecondition,
    UnknownSymbol,
)
from .ir import ModelDocument, build_fragment, ground, validate
from .llm import (
    BackendSpec,
    Gateway,
    TemplateLibrary,
    confidence_of,
    default_template_dir,
    make_backend,
)
from .solver import ScipyEngine, SolverParams, Status, SubprocessEngine, solve
from .state import Clause, ClauseKind, ClauseStatus, Parameter, State, Variable, VarType
from .structure import (
    classify_problem,
    detect_structures,
    load_structure_pool,
    proposal_to_annotation,
    verify_proposal,
)


class Stage(str, Enum):
    EXTRACT_PARAMS = "ExtractParams"
    EXTRACT_CLAUSES = "ExtractClauses"
    FORMULATE = "Formulate"
    CODE = "Code"
    ASSEMBLE = "Assemble"
    SOLVE_DEBUG = "SolveDebug"
    DONE = "Done"


STAGE_ORDER = [Stage.EXTRACT_PARAMS, Stage.EXTRACT_CLAUSES, Stage.FORMULATE,
               Stage.CODE, Stage.ASSEMBLE, Stage.SOLVE_DEBUG, Stage.DONE]


PARAMS_SCHEMA = {
    "type": "object", "required": ["parameters"],
    "properties": {
        "background": {"type": "string"},
        "parameters": {"type": "array", "items": {
            "type": "object", "required": ["symbol", "shape", "definition"],
            "properties": {"symbol": {"type": "string"}, "shape": {"type": "array"},
                           "definition": {"type": "string"}},
        }},
    },
}
CLAUSES_SCHEMA = {
    "type": "object", "required": ["constraints", "objective"],
    "properties": {"constraints": {"type": "array", "items": {"type": "string"}}},
}
FORMULATE_SCHEMA = {
    "type": "object", "required": ["formulation"],
    "properties": {
        "formulation": {"type": "string"},
        "new_variables": {"type": "array", "items": {
            "type": "object", "required": ["symbol", "vartype"],
            "properties": {"symbol": {"type": "string"}, "vartype": {"type": "string"},
                           "shape": {"type": "array"}, "definition": {"type": "string"}},
        }},
        "symbols_used": {"type": "array", "items": {"type": "string"}},
    },
}
CODE_SCHEMA = {"type": "object", "required": ["ir_text"],
               "properties": {"ir_text": {"type": "string"}}}
DEBUG_SCHEMA = {
    "type": "object", "required": ["fragments"],
    "properties": {"fragments": {"type": "array", "items": {
        "type": "object", "required": ["clause_id", "ir_text"],
        "properties": {"clause_id": {"type": "string"}, "ir_text": {"type": "string"}},
    }}},
}


@dataclass
class RunConfig:
    backend: BackendSpec
    strong_backend: Optional[BackendSpec] = None
    max_debug_attempts: int = 5
    reask_limit: int = 2
    escalation_threshold: int = 4
    escalation_route: str = "Off"
    reflect_extraction: bool = True
    reflect_modeling: bool = True
    reflection_passes: int = 1
    repair_infeasible: bool = False
    structure_detection: bool = True
    classify: bool = True
    solver: SolverParams = field(default_factory=SolverParams)
    solver_engine: str = "scipy"  # 'scipy' or a subprocess argv list
    subprocess_command: Optional[list] = None
    big_m: float = 1e6
    templates_dir: Optional[str] = None
    registry_path: Optional[str] = None
    structure_pool_path: Optional[str] = None

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "RunConfig":
        doc = dict(doc)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        backend = BackendSpec.from_dict(doc.pop("backend"))
        strong = doc.pop("strong_backend", None)
        strong_spec = BackendSpec.from_dict(strong) if strong else None
        solver = SolverParams.from_dict(doc.pop("solver", None))
        cfg = cls(backend=backend, strong_backend=strong_spec, solver=solver, **doc)
        cfg._base_dir = Path(base_dir) if base_dir else None
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    _base_dir: Optional[Path] = None

    def engine(self):
        if self.subprocess_command:
            return SubprocessEngine(self.subprocess_command, provides_duals=True)
        return ScipyEngine()


@dataclass
class SolveOutcome:
    status: str  # Optimal | Infeasible | Unbounded | Error | TimeLimit
    objective: Optional[float] = None
    primal: Optional[dict] = None
    diagnostics: str = ""

    def __post_init__(self):
        assert (self.objective is not None) == (self.status == "Optimal")

    def to_dict(self) -> dict:
        return {"status": self.status, "objective": self.objective,
                "primal": self.primal, "diagnostics": self.diagnostics}


class EventLog:
    """Append-only JSON-lines event log, optionally mirrored to a file."""

    def __init__(self, path=None):
        self.events: list = []
        self.path = Path(path) if path else None

    def __call__(self, stage, kind, outcome, detail="", fingerprint=None):
        event = {
            "ts": time.time(),
            "stage": str(stage.value if isinstance(stage, Stage) else stage),
            "kind": kind,
            "outcome": outcome,
            "detail": detail,
        }
        if fingerprint:
            event["fingerprint"] = fingerprint
        self.events.append(event)
        if self.path:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(event) + "\n")
        return event

    def structural(self) -> list:
        """Events without timestamps, for replay-determinism comparison."""
        return [{k: v for k, v in e.items() if k != "ts"} for e in self.events]

    def first_error_stage(self) -> Optional[str]:
        for e in self.events:
            if e["outcome"] == "error":
                return e["stage"]
        return None


def derive_stage(state: State) -> Stage:
    """Where a state sits in the staged workflow (drives preconditions)."""
    if not state.parameters and not state.clauses:
        return Stage.EXTRACT_PARAMS
    if not state.clauses:
        return Stage.EXTRACT_CLAUSES
    statuses = [c.status for c in state.clauses.values()]
    if any(s is ClauseStatus.EXTRACTED for s in statuses):
        return Stage.FORMULATE
    if any(s is ClauseStatus.FORMULATED for s in statuses):
        return Stage.CODE
    return Stage.ASSEMBLE


class Pipeline:
    """One modeling run over one State.

    Stage methods mutate the held state/document and log events; ``run``
    drives all stages and never raises on modeling failures (they come back
    as an Error outcome with the failure recorded in the event log).
    """

    def __init__(self, config: RunConfig, state: Optional[State] = None,
                 doc: Optional[ModelDocument] = None, log: Optional[EventLog] = None,
                 project_id: str = "run", backend=None, strong_backend=None):
        self.config = config
        self.state = state if state is not None else State()
        self.doc = doc if doc is not None else ModelDocument()
        self.log = log or EventLog()
        self.project_id = project_id
        templates = TemplateLibrary(config.templates_dir or default_template_dir())
        base = getattr(config, "_base_dir", None)
        if backend is None:
            backend = make_backend(config.backend, base)
        self.gateway = Gateway(backend, templates, config.reask_limit)
        strong_gateway = None
        if strong_backend is not None:
            strong_gateway = Gateway(strong_backend, templates, config.reask_limit)
        elif config.strong_backend is not None:
            strong_gateway = Gateway(make_backend(config.strong_backend, base), templates,
                                     config.reask_limit)
        registry = load_reflective_registry(config.registry_path)
        self.corrector = ErrorCorrector(
            gateway=self.gateway,
            strong_gateway=strong_gateway,
            policy=EscalationPolicy(threshold=config.escalation_threshold,
                                    route=config.escalation_route),
            log=self.log,
            registry=registry,
            passes=config.reflection_passes,
        )
        self.structure_pool = load_structure_pool(config.structure_pool_path)
        self.notifications: list = []
        self.debug_attempts = 0

    @property
    def reviews(self) -> list:
        return self.corrector.reviews

    # -- helpers ---------------------------------------------------------------

    def _require_stage(self, expected: Stage):
        actual = derive_stage(self.state)
        if actual is not expected:
            raise StagePrecondition(
                f"stage precondition: expected {expected.value}, state is at {actual.value}"
            )

    def _register_symbol(self, item) -> str:
        """Register a parameter/variable, auto-renaming on collision."""
        base = item.symbol
        suffix = 2
        while self.state.has_symbol(item.symbol) or item.symbol in self.state.clauses:
            item.symbol = f"{base}{suffix}"
            suffix += 1
        if item.symbol != base:
            self.log(derive_stage(self.state), "correction", "applied",
                     detail=f"symbol collision: '{base}' registered as '{item.symbol}'")
        self.state.add_symbol(item)
        return item.symbol

    def _ask(self, stage: Stage, template: str, bindings: dict, schema):
        response = self.gateway.ask(template, bindings, schema)
        self.log(stage, "prompt", "ok",
                 detail=f"{template} (retries {response.retries})",
                 fingerprint=response.fingerprint)
        return response

    # -- stages ------------------------------------------------------------------

    def extract_parameters(self, description: str) -> State:
        self._require_stage(Stage.EXTRACT_PARAMS)
        if not self.state.background:
            self.state.background = description
        response = self._ask(Stage.EXTRACT_PARAMS, "extract_params",
                             {"description": description}, PARAMS_SCHEMA)
        payload = response.payload
        if isinstance(payload.get("background"), str) and payload["background"]:
            self.state.background = payload["background"]
        self.description = description
        for entry in payload["parameters"]:
            param = Parameter(symbol=entry["symbol"], shape=tuple(entry["shape"]),
                              definition=entry.get("definition", ""))
            symbol = self._register_symbol(param)
            if entry.get("values") is not None:
                self.state.bind_data(symbol, entry["values"])
        if self.config.reflect_extraction:
            self.corrector.stage = Stage.EXTRACT_PARAMS.value
            self.corrector.reflect(self.state, "ParamExtraction", self.doc)
        self._stage_confidence(Stage.EXTRACT_PARAMS, "parameter list", response)
        self.log(Stage.EXTRACT_PARAMS, "stage", "done",
                 detail=f"{len(self.state.parameters)} parameters")
        return self.state

    def extract_clauses(self) -> State:
        self._require_stage(Stage.EXTRACT_CLAUSES)
        bindings = {
            "background": self.state.background,
            "description": getattr(self, "description", self.state.background),
            "parameters": summarize_symbols(self.state),
        }
        response = self._ask(Stage.EXTRACT_CLAUSES, "extract_clauses", bindings,
                             CLAUSES_SCHEMA)
        payload = response.payload
        objectives = payload["objective"]
        if isinstance(objectives, list):
            raise ObjectiveConflict(
                f"{len(objectives)} objectives proposed; exactly one is allowed"
            )
        if not str(objectives).strip():
            # one repair re-ask, then surface
            retry = self.gateway.ask("extract_clauses", {**bindings,
                                                         "repair_pass": "missing objective"},
                                     CLAUSES_SCHEMA)
            self.log(Stage.EXTRACT_CLAUSES, "prompt", "ok", detail="objective repair re-ask",
                     fingerprint=retry.fingerprint)
            payload = retry.payload
            if not str(payload["objective"]).strip():
                self.log(Stage.EXTRACT_CLAUSES, "stage", "error", detail="no objective found")
                raise NoObjectiveFound("the model proposed no objective")
        texts = [str(t) for t in payload["constraints"]]
        if sum(1 for t in texts if t.strip().lower().startswith(("maximize", "minimize"))):
            extra = [t for t in texts if t.strip().lower().startswith(("maximize", "minimize"))]
            self.log(Stage.EXTRACT_CLAUSES, "stage", "error",
                     detail=f"objective-like constraints: {extra}")
            raise ObjectiveConflict("a second objective appeared in the constraint list")
        for i, text in enumerate(texts, start=1):
            self.state.add_clause(Clause(id=f"c{i}", kind=ClauseKind.CONSTRAINT,
                                         description=text))
        self.state.add_clause(Clause(id="obj", kind=ClauseKind.OBJECTIVE,
                                     description=str(payload["objective"])))
        if self.config.reflect_extraction:
            self.corrector.stage = Stage.EXTRACT_CLAUSES.value
            self.corrector.reflect(self.state, "ClauseExtraction", self.doc)
        self._stage_confidence(Stage.EXTRACT_CLAUSES, "clause list", response)
        self.log(Stage.EXTRACT_CLAUSES, "stage", "done",
                 detail=f"{len(self.state.clauses)} clauses")
        return self.state

    def formulate_clause(self, clause_id: str) -> State:
        clause = self.state.clauses.get(clause_id)
        if clause is None:
            raise StagePrecondition(f"unknown clause '{clause_id}'")
        if clause.status is not ClauseStatus.EXTRACTED:
            # re-formulating replaces the old formulation and its edges
            self.state.reset_clause(clause_id, ClauseStatus.EXTRACTED)
        response = self._ask(Stage.FORMULATE, "formulate_clause", {
            "background": self.state.background,
            "clause_kind": clause.kind.value,
            "clause_description": clause.description,
            "context": summarize_symbols(self.state),
        }, FORMULATE_SCHEMA)
        payload = response.payload
        for entry in payload.get("new_variables", []):
            var = Variable(symbol=entry["symbol"], shape=tuple(entry.get("shape", [])),
                           definition=entry.get("definition", ""),
                           vartype=entry["vartype"],
                           bounds=tuple(entry["bounds"]) if entry.get("bounds") else None)
            self._register_symbol(var)
        formulation = payload["formulation"]
        clause.formulation = formulation
        clause.status = ClauseStatus.FORMULATED
        clause.confidence = confidence_of(response)
        referenced = list(payload.get("symbols_used", []))
        for symbol in referenced:
            if not self.state.has_symbol(symbol):
                self.log(Stage.FORMULATE, "stage", "error",
                         detail=f"{clause_id} references unknown symbol '{symbol}'")
                raise UnknownSymbol(f"{clause_id}: '{symbol}' is not a known symbol")
            self.state.connect(clause_id, symbol)
        for symbol in scan_symbols(formulation, self.state):
            if not self.state.graph.has(clause_id, symbol):
                self.state.connect(clause_id, symbol)
                self.log(Stage.FORMULATE, "correction", "applied",
                         detail=f"{clause_id}: connected scanned symbol '{symbol}'")
        self.corrector.stage = Stage.FORMULATE.value
        self.corrector.escalate(self.state, "clause", clause_id, clause.confidence,
                                response.raw, self.doc)
        return self.state

    def formulate_all(self) -> State:
        self._require_stage(Stage.FORMULATE)
        for clause_id in [cid for cid, c in self.state.clauses.items()
                          if c.status is ClauseStatus.EXTRACTED]:
            if clause_id in self.state.clauses:  # escalation may remove clauses
                self.formulate_clause(clause_id)
        if self.config.reflect_modeling:
            self.corrector.stage = Stage.FORMULATE.value
            self.corrector.reflect(self.state, "ClauseModeling", self.doc)
            self.corrector.reflect(self.state, "VariableCheck", self.doc)
        self._assert_formulation_edges()
        if self.config.structure_detection:
            self.run_structure_detection()
        if self.config.classify:
            advisory = classify_problem(getattr(self, "description", self.state.background),
                                        self.gateway, self.log)
            self.notifications.append(advisory)
            self.log(Stage.FORMULATE, "advisory", "ok",
                     detail=f"problem class: {advisory.detected}")
        self.log(Stage.FORMULATE, "stage", "done", detail="all clauses formulated")
        return self.state

    def _assert_formulation_edges(self):
        for clause in self.state.clauses.values():
            if not clause.formulation:
                continue
            for symbol in scan_symbols(clause.formulation, self.state):
                assert self.state.graph.has(clause.id, symbol), (
                    f"{clause.id} uses '{symbol}' without a graph edge"
                )

    def run_structure_detection(self) -> list:
        proposals = detect_structures(self.state, self.gateway, self.structure_pool, self.log)
        accepted = []
        replaced: list = []
        for proposal in proposals:
            ok, reason = verify_proposal(self.state, proposal)
            if not ok:
                self.log(Stage.FORMULATE, "structure", "rejected",
                         detail=f"{proposal.kind}: {reason}")
                continue
            annotation = proposal_to_annotation(proposal, self.state)
            self.doc.annotations.append(annotation)
            replaced.extend(cid for cid in proposal.replaces if cid not in replaced)
            self.log(Stage.FORMULATE, "structure", "accepted",
                     detail=f"{proposal.kind} annotation attached"
                            + (f", replacing {proposal.replaces}" if proposal.replaces else ""))
            accepted.append(annotation)
        # several proposals may supersede the same clause; remove after verifying all
        for cid in replaced:
            if cid in self.state.clauses:
                self.state.remove_clause(cid)
        return accepted

    def code_clause(self, clause_id: str) -> State:
        clause = self.state.clauses.get(clause_id)
        if clause is None:
            raise StagePrecondition(f"unknown clause '{clause_id}'")
        if clause.status is not ClauseStatus.FORMULATED:
            raise StagePrecondition(f"clause '{clause_id}' is {clause.status.value}, "
                                    "coding needs Formulated")
        context = self.state.context_for(clause_id)
        context_map = {
            "parameters": {p.symbol: p for p in context["parameters"]},
            "variables": {v.symbol: v for v in context["variables"]},
        }
        listing = "\n".join(
            [f"parameter {p.symbol} shape {list(p.shape)}: {p.definition}"
             for p in context["parameters"]]
            + [f"variable {v.symbol} shape {list(v.shape)} ({v.vartype.value}): {v.definition}"
               for v in context["variables"]]
        ) or "(none)"
        bindings = {
            "clause_kind": clause.kind.value,
            "clause_description": clause.description,
            "formulation": clause.formulation,
            "context": listing,
        }
        response = self._ask(Stage.CODE, "code_clause", bindings, CODE_SCHEMA)
        ir_text = response.payload["ir_text"]
        try:
            fragment = build_fragment(clause_id, ir_text, context_map)
        except (ParseError, MilpforgeError) as exc:
            retry = self.gateway.ask("code_clause", {**bindings, "repair_pass": str(exc)},
                                     CODE_SCHEMA)
            self.log(Stage.CODE, "prompt", "ok", detail=f"code repair re-ask ({exc})",
                     fingerprint=retry.fingerprint)
            try:
                fragment = build_fragment(clause_id, retry.payload["ir_text"], context_map)
            except (ParseError, MilpforgeError) as exc2:
                self.log(Stage.CODE, "stage", "error",
                         detail=f"{clause_id} failed to parse: {exc2}")
                raise
        expected_kind = ClauseKind.OBJECTIVE if hasattr(fragment, "sense") else ClauseKind.CONSTRAINT
        if clause.kind is not expected_kind:
            self.log(Stage.CODE, "stage", "error",
                     detail=f"{clause_id}: fragment kind does not match clause kind")
            raise ParseError(f"{clause_id}: expected a {clause.kind.value} fragment")
        fid = self.doc.next_fragment_id()
        self.doc.fragments[fid] = fragment
        clause.fragment = fid
        clause.status = ClauseStatus.CODED
        return self.state

    def code_all(self) -> State:
        self._require_stage(Stage.CODE)
        for clause_id in [cid for cid, c in self.state.clauses.items()
                          if c.status is ClauseStatus.FORMULATED]:
            self.code_clause(clause_id)
        self.log(Stage.CODE, "stage", "done", detail=f"{len(self.doc.fragments)} fragments")
        return self.state

    # -- assembly, solve, debug ---------------------------------------------------

    def _fragment_listing(self) -> str:
        lines = []
        for clause in self.state.clauses.values():
            frag = self.doc.fragments.get(clause.fragment)
            rendered = frag.render() if frag is not None else "(missing)"
            lines.append(f"{clause.id} ({clause.kind.value}): {clause.description}\n"
                         f"  notation: {rendered}")
        return "\n".join(lines)

    def _try_assemble(self):
        """Ground + solve once. Returns (outcome, failure_text)."""
        try:
            model = ground(self.doc, self.state)
            for note in validate(model):
                self.log(Stage.ASSEMBLE, "diagnostic", "warning", detail=note)
        except MilpforgeError as exc:
            return None, f"grounding failed: {exc}"
        solution = solve(model, self.config.solver, engine=self.config.engine())
        self.log(Stage.ASSEMBLE, "solve", "ok",
                 detail=f"status {solution.status.value}"
                        + (f", objective {solution.objective:.6g}"
                           if solution.objective is not None else ""))
        if solution.status is Status.ERROR:
            return None, f"solver error: {solution.message}"
        outcome = SolveOutcome(
            status=solution.status.value,
            objective=solution.objective,
            primal=solution.primal,
            diagnostics=solution.message,
        )
        if solution.status in (Status.INFEASIBLE, Status.UNBOUNDED) and \
                self.config.repair_infeasible:
            return outcome, f"model solved {solution.status.value}; repair requested"
        return outcome, None

    def assemble_and_solve(self) -> SolveOutcome:
        self._require_stage(Stage.ASSEMBLE)
        objectives = [c for c in self.state.clauses.values()
                      if c.kind is ClauseKind.OBJECTIVE]
        if len(objectives) != 1:
            raise NoObjectiveFound(f"assembly needs exactly one objective clause, "
                                   f"found {len(objectives)}")
        outcome, failure = self._try_assemble()
        if failure is None:
            self.log(Stage.DONE, "stage", "done", detail=f"status {outcome.status}")
            return outcome
        if outcome is not None and not self.config.repair_infeasible:
            return outcome
        return self.debug_loop(failure, fallback=outcome)

    def debug_loop(self, failure: str, fallback: Optional[SolveOutcome] = None) -> SolveOutcome:
        """Feed the failure and all fragments to the LLM, retry, bounded attempts."""
        max_attempts = self.config.max_debug_attempts
        attempt = 0
        while attempt < max_attempts:
            attempt += 1
            self.debug_attempts = attempt
            self.log(Stage.SOLVE_DEBUG, "debug", "attempt",
                     detail=f"attempt {attempt}/{max_attempts}: {failure}")
            try:
                response = self.gateway.ask("debug", {
                    "background": self.state.background,
                    "failure": failure,
                    "fragments": self._fragment_listing(),
                    "context": summarize_symbols(self.state),
                    "attempt": str(attempt),
                }, DEBUG_SCHEMA)
            except MilpforgeError as exc:
                self.log(Stage.SOLVE_DEBUG, "debug", "error", detail=str(exc))
                raise DebugExhausted(attempt, failure) from exc
            self.log(Stage.SOLVE_DEBUG, "prompt", "ok", detail="debug reply",
                     fingerprint=response.fingerprint)
            parse_failed = None
            for entry in response.payload["fragments"]:
                cid = entry["clause_id"]
                clause = self.state.clauses.get(cid)
                if clause is None:
                    parse_failed = f"debug reply targets unknown clause '{cid}'"
                    break
                context = self.state.context_for(cid)
                context_map = {
                    "parameters": {p.symbol: p for p in context["parameters"]},
                    "variables": {v.symbol: v for v in context["variables"]},
                }
                try:
                    fragment = build_fragment(cid, entry["ir_text"], context_map)
                except MilpforgeError as exc:
                    parse_failed = f"replacement for {cid} failed to parse: {exc}"
                    break
                if clause.fragment and clause.fragment in self.doc.fragments:
                    self.doc.fragments[clause.fragment] = fragment
                else:
                    fid = self.doc.next_fragment_id()
                    self.doc.fragments[fid] = fragment
                    clause.fragment = fid
                    clause.status = ClauseStatus.CODED
                self.log(Stage.SOLVE_DEBUG, "debug", "patched",
                         detail=f"{cid} notation replaced")
            if parse_failed is not None:
                failure = parse_failed
                continue
            outcome, failure_next = self._try_assemble()
            if failure_next is None:
                self.log(Stage.SOLVE_DEBUG, "debug", "fixed",
                         detail=f"repaired on attempt {attempt}")
                self.log(Stage.DONE, "stage", "done", detail=f"status {outcome.status}")
                return outcome
            failure = failure_next
            fallback = outcome if outcome is not None else fallback
        self.log(Stage.SOLVE_DEBUG, "debug", "error",
                 detail=f"exhausted after {attempt} attempts: {failure}")
        raise DebugExhausted(attempt, failure)

    def _stage_confidence(self, stage: Stage, item_kind: str, response):
        conf = confidence_of(response)
        if self.corrector.policy.fires(conf):
            self.corrector.stage = stage.value
            self.corrector._queue_review(item_kind, stage.value, conf, "low stage confidence")
            self.log(stage, "escalation", "flagged",
                     detail=f"{item_kind}: confidence {conf}")

    # -- full run -------------------------------------------------------------------

    def run(self, description: str) -> SolveOutcome:
        self.log(Stage.EXTRACT_PARAMS, "run", "start", detail=self.project_id)
        try:
            self.extract_parameters(description)
            self.extract_clauses()
            self.formulate_all()
            self.code_all()
            outcome = self.assemble_and_solve()
        except DebugExhausted as exc:
            outcome = SolveOutcome(status="Error",
                                   diagnostics=f"debugging exhausted: {exc.last_failure}")
        except MilpforgeError as exc:
            stage = derive_stage(self.state)
            self.log(stage, "stage", "error", detail=str(exc))
            outcome = SolveOutcome(status="Error", diagnostics=str(exc))
        self.log(Stage.DONE, "run", "end", detail=f"status {outcome.status}")
        return outcome
