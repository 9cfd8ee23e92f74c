import pytest

from milpforge.correction import (
    ErrorCorrector,
    EscalationPolicy,
    FeedbackDecision,
    load_reflective_registry,
    summarize_symbols,
)
from milpforge.errors import InvalidPayload, UnknownTarget
from milpforge.ir import ModelDocument, build_fragment
from milpforge.llm import AuthoredBackend, Gateway
from milpforge.pipeline import EventLog
from milpforge.state import Clause, ClauseStatus, Parameter, State, Variable


def make_corrector(handlers, route="Off", threshold=4, strong_handlers=None,
                   log=None):
    log = log or EventLog()
    gateway = Gateway(AuthoredBackend(handlers))
    strong = Gateway(AuthoredBackend(strong_handlers)) if strong_handlers else None
    policy = EscalationPolicy(threshold=threshold, route=route)
    return ErrorCorrector(gateway, policy, log, strong_gateway=strong), log


def modeled_state() -> State:
    s = State("factory")
    s.add_symbol(Parameter("Hours", ("K",), "hours per unit"))
    s.add_symbol(Parameter("MaxHours", (), "available hours"))
    s.add_symbol(Variable("x", ("K",), "units"))
    s.add_clause(Clause("c1", "Constraint", "hours cap",
                        formulation="sum_j Hours_j x_j <= MaxHours",
                        status="Formulated", confidence=5))
    s.add_clause(Clause("obj", "Objective", "profit",
                        formulation="maximize sum_j Hours_j x_j",
                        status="Formulated", confidence=5))
    for cid, syms in (("c1", ("Hours", "x", "MaxHours")), ("obj", ("Hours", "x"))):
        for sym in syms:
            s.connect(cid, sym)
    s.bind_data("Hours", [2, 4, 3])
    s.bind_data("MaxHours", 100)
    return s


class TestRegistry:
    def test_shipped_registry_loads(self):
        registry = load_reflective_registry()
        stages = {p.stage for p in registry}
        assert stages == {"ParamExtraction", "ClauseExtraction", "ClauseModeling",
                          "VariableCheck"}
        assert any(p.scope == "collection" for p in registry)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "reg.json"
        path.write_text('[{"id": "a", "stage": "ParamExtraction", "question": "q"},'
                        ' {"id": "a", "stage": "VariableCheck", "question": "q"}]')
        with pytest.raises(ValueError):
            load_reflective_registry(path)


class TestReflect:
    def test_unknown_value_parameter_demoted_to_variable(self):
        def reflect(b):
            if b["item_kind"] == "parameter" and "TotalCost" in b["item"]:
                return {"verdict": "revise",
                        "action": {"kind": "demote_to_variable",
                                   "vartype": "Continuous"}, "confidence": 4}
            return {"verdict": "ok", "confidence": 5}

        corrector, log = make_corrector({"reflect_item": reflect,
                                         "reflect_collection":
                                         lambda b: {"verdict": "ok"}})
        s = modeled_state()
        s.add_symbol(Parameter("TotalCost", (), "total cost, not known up front"))
        s.add_clause(Clause("c2", "Constraint", "cost definition"))
        s.connect("c2", "TotalCost")
        corrector.reflect(s, "ParamExtraction")
        assert "TotalCost" in s.variables and "TotalCost" not in s.parameters
        assert s.graph.has("c2", "TotalCost")  # edges preserved
        assert any(e["kind"] == "correction" and e["outcome"] == "applied"
                   for e in log.events)

    def test_redundant_clause_dropped_objective_untouched(self):
        def collection(b):
            return {"verdict": "revise",
                    "action": {"kind": "drop_items", "ids": ["c2", "obj"]},
                    "confidence": 4}

        corrector, _ = make_corrector({
            "reflect_item": lambda b: {"verdict": "ok"},
            "reflect_collection": collection,
        })
        s = modeled_state()
        s.add_clause(Clause("c2", "Constraint", "hours cap restated"))
        before = len(s.clauses)
        corrector.reflect(s, "ClauseExtraction")
        assert len(s.clauses) == before - 1
        assert "obj" in s.clauses  # objective never dropped by the list audit

    def test_all_ok_transcript_leaves_state_identical(self):
        corrector, _ = make_corrector({
            "reflect_item": lambda b: {"verdict": "ok", "confidence": 5},
            "reflect_collection": lambda b: {"verdict": "ok", "confidence": 5},
        })
        s = modeled_state()
        before = s.dumps()
        for stage in ("ParamExtraction", "ClauseExtraction", "ClauseModeling",
                      "VariableCheck"):
            corrector.reflect(s, stage)
        assert s.dumps() == before

    def test_reflect_idempotent_under_ok(self):
        corrector, _ = make_corrector({
            "reflect_item": lambda b: {"verdict": "ok"},
            "reflect_collection": lambda b: {"verdict": "ok"},
        })
        s = modeled_state()
        corrector.reflect(s, "ClauseModeling")
        once = s.dumps()
        corrector.reflect(s, "ClauseModeling")
        assert s.dumps() == once


class TestEscalate:
    @pytest.mark.parametrize("confidence", [1, 2, 3, 4, 5])
    @pytest.mark.parametrize("threshold", [1, 2, 3, 4, 5])
    def test_fires_iff_strictly_below_threshold(self, confidence, threshold):
        policy = EscalationPolicy(threshold=threshold, route="User")
        assert policy.fires(confidence) == (confidence < threshold)

    def test_boundary_no_call_at_threshold(self):
        calls = []

        def strong(b):
            calls.append(b)
            return {"action": "remove"}

        corrector, _ = make_corrector({}, route="StrongBackend",
                                      strong_handlers={"escalate_review": strong})
        s = modeled_state()
        decision = corrector.escalate(s, "clause", "c1", 4, "raw")
        assert decision.action == "keep" and calls == []

    def test_strong_backend_modify_applied(self):
        def strong(b):
            return {"action": "modify",
                    "payload": {"formulation": "sum_j Hours_j x_j <= 2 MaxHours"},
                    "rationale": "cap was too tight"}

        corrector, _ = make_corrector({}, route="StrongBackend",
                                      strong_handlers={"escalate_review": strong})
        s = modeled_state()
        decision = corrector.escalate(s, "clause", "c1", 3, "raw")
        assert decision.action == "modify" and decision.author == "StrongBackend"
        assert s.clauses["c1"].formulation == "sum_j Hours_j x_j <= 2 MaxHours"

    def test_transport_failure_falls_back_to_review(self):
        corrector, _ = make_corrector({}, route="StrongBackend",
                                      strong_handlers={})  # no handler -> miss
        s = modeled_state()
        decision = corrector.escalate(s, "clause", "c1", 2, "raw")
        assert decision.action == "keep"
        assert corrector.reviews and corrector.reviews[0].item_id == "c1"

    def test_route_off_still_flags(self):
        corrector, log = make_corrector({}, route="Off")
        s = modeled_state()
        decision = corrector.escalate(s, "clause", "c1", 1, "raw")
        assert decision.action == "keep"
        assert corrector.reviews[0].confidence == 1
        assert any(e["outcome"] == "flagged" for e in log.events)

    def test_user_route_queues_review(self):
        corrector, _ = make_corrector({}, route="User")
        s = modeled_state()
        corrector.escalate(s, "clause", "c1", 2, "raw")
        assert len(corrector.reviews) == 1
        assert corrector.reviews[0].item_kind == "clause"


class TestApplyFeedback:
    def test_keep_is_noop(self):
        corrector, _ = make_corrector({})
        s = modeled_state()
        before = s.dumps()
        corrector.apply_feedback(s, FeedbackDecision("c1", "keep"))
        assert s.dumps() == before

    def test_remove_clause_cleans_edges(self):
        corrector, _ = make_corrector({})
        s = modeled_state()
        corrector.apply_feedback(s, FeedbackDecision("c1", "remove"))
        assert "c1" not in s.clauses
        assert all(c != "c1" for c, _ in s.graph.edges)

    def test_remove_symbol_resets_dependents(self):
        corrector, _ = make_corrector({})
        s = modeled_state()
        doc = ModelDocument()
        ctx = {"parameters": s.parameters, "variables": s.variables}
        doc.fragments["f1"] = build_fragment("c1", s.clauses["c1"].formulation, ctx)
        s.clauses["c1"].fragment = "f1"
        s.clauses["c1"].status = ClauseStatus.CODED
        corrector.apply_feedback(s, FeedbackDecision("Hours", "remove"), doc)
        assert "Hours" not in s.parameters
        assert s.clauses["c1"].status is ClauseStatus.EXTRACTED
        assert s.clauses["c1"].formulation is None
        assert not doc.fragments

    def test_modify_formulation_resets_coded_to_formulated(self):
        corrector, _ = make_corrector({})
        s = modeled_state()
        doc = ModelDocument()
        ctx = {"parameters": s.parameters, "variables": s.variables}
        doc.fragments["f1"] = build_fragment("c1", s.clauses["c1"].formulation, ctx)
        s.clauses["c1"].fragment = "f1"
        s.clauses["c1"].status = ClauseStatus.CODED
        corrector.apply_feedback(
            s, FeedbackDecision("c1", "modify",
                                {"formulation": "sum_j Hours_j x_j <= MaxHours"}), doc)
        assert s.clauses["c1"].status is ClauseStatus.FORMULATED
        assert s.clauses["c1"].fragment is None
        assert not doc.fragments

    def test_modify_description_resets_to_extracted(self):
        corrector, _ = make_corrector({})
        s = modeled_state()
        corrector.apply_feedback(
            s, FeedbackDecision("c1", "modify", {"description": "new cap wording"}))
        assert s.clauses["c1"].status is ClauseStatus.EXTRACTED
        assert s.clauses["c1"].formulation is None

    def test_unknown_target(self):
        corrector, _ = make_corrector({})
        with pytest.raises(UnknownTarget):
            corrector.apply_feedback(modeled_state(), FeedbackDecision("ghost", "remove"))

    def test_invalid_payload(self):
        corrector, _ = make_corrector({})
        with pytest.raises(InvalidPayload):
            corrector.apply_feedback(
                modeled_state(), FeedbackDecision("c1", "modify", {"vartype": "Binary"}))
        with pytest.raises(InvalidPayload):
            FeedbackDecision("c1", "modify", None)

    def test_every_mutation_logged(self):
        corrector, log = make_corrector({})
        s = modeled_state()
        corrector.apply_feedback(s, FeedbackDecision("c1", "remove"))
        corrector.apply_feedback(s, FeedbackDecision("x", "modify",
                                                     {"definition": "units to make"}))
        kinds = [(e["kind"], e["outcome"]) for e in log.events]
        assert ("feedback", "remove") in kinds
        assert ("feedback", "modify") in kinds

    def test_bipartite_closure_after_symbol_removal(self):
        corrector, _ = make_corrector({})
        s = modeled_state()
        corrector.apply_feedback(s, FeedbackDecision("x", "remove"))
        for clause_id, symbol in s.graph.edges:
            assert clause_id in s.clauses
            assert s.has_symbol(symbol)


class TestSummaries:
    def test_symbol_summary_has_no_numeric_data(self):
        s = modeled_state()
        listing = summarize_symbols(s)
        assert "hours per unit" in listing
        assert "100" not in listing  # bound data never leaks into prompts
