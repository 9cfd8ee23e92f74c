import numpy as np
import pytest

from milpforge.ir import ModelDocument, build_fragment, ground, lower_annotations
from milpforge.llm import AuthoredBackend, Gateway
from milpforge.solver import Status, solve
from milpforge.state import Clause, Parameter, State, Variable
from milpforge.structure import (
    ProblemClassAdvisory,
    StructureProposal,
    classify_problem,
    detect_structures,
    load_structure_pool,
    proposal_to_annotation,
    verify_proposal,
)


def facility_state() -> State:
    s = State("store siting")
    s.add_symbol(Parameter("OpenCost", ("K",), "opening cost"))
    s.add_symbol(Parameter("HandleCost", ("K",), "handling cost per pallet"))
    s.add_symbol(Parameter("Cap", ("K",), "pallet capacity when open"))
    s.add_symbol(Parameter("Demand", (), "total pallets needed"))
    s.add_symbol(Variable("y", ("K",), "pallets stocked"))
    s.add_symbol(Variable("open", ("K",), "site opened", "Binary"))
    s.bind_data("OpenCost", [50, 60, 70])
    s.bind_data("HandleCost", [2, 3, 4])
    s.bind_data("Cap", [40, 50, 60])
    s.bind_data("Demand", 70)
    s.add_clause(Clause("c1", "Constraint", "cover regional demand",
                        formulation="sum_k y_k >= Demand", status="Formulated"))
    s.add_clause(Clause("c2", "Constraint",
                        "stock at most capacity when open, nothing when closed",
                        formulation="y_k <= Cap_k open_k forall k", status="Formulated"))
    s.add_clause(Clause("obj", "Objective", "minimize total cost",
                        formulation="minimize sum_k OpenCost_k open_k + sum_k HandleCost_k y_k",
                        status="Formulated"))
    for cid, syms in (("c1", ("y", "Demand")), ("c2", ("y", "Cap", "open")),
                      ("obj", ("OpenCost", "open", "HandleCost", "y"))):
        for sym in syms:
            s.connect(cid, sym)
    return s


def crew_state() -> State:
    s = State("crew assignment")
    s.add_symbol(Parameter("Cost", ("N", "K"), "assignment cost"))
    s.add_symbol(Parameter("Need", ("K",), "hours each flight needs"))
    s.add_symbol(Parameter("MaxShift", (), "shift cap"))
    s.add_symbol(Variable("assign", ("N", "K"), "assignment", "Binary"))
    s.add_symbol(Variable("T", ("N", "K"), "hours logged"))
    s.bind_data("Cost", [[10, 20], [12, 15], [30, 25]])
    s.bind_data("Need", [8, 6])
    s.bind_data("MaxShift", 8)
    s.add_clause(Clause("c1", "Constraint", "one flight per crew member",
                        formulation="sum_j assign_{i,j} <= 1 forall i",
                        status="Formulated"))
    s.add_clause(Clause("c2", "Constraint", "hours only when assigned",
                        formulation="T_{i,j} <= MaxShift assign_{i,j} forall i, j",
                        status="Formulated"))
    s.add_clause(Clause("c3", "Constraint", "flight hour needs",
                        formulation="sum_i T_{i,j} >= Need_j forall j",
                        status="Formulated"))
    s.add_clause(Clause("obj", "Objective", "minimize assignment cost",
                        formulation="minimize sum_{i,j} Cost_{i,j} assign_{i,j}",
                        status="Formulated"))
    for cid, syms in (("c1", ("assign",)), ("c2", ("T", "MaxShift", "assign")),
                      ("c3", ("T", "Need")), ("obj", ("Cost", "assign"))):
        for sym in syms:
            s.connect(cid, sym)
    return s


def indicator_proposals():
    return [
        StructureProposal("Indicator", {
            "kind": "Indicator", "expand": [["k", "K"]],
            "trigger": {"var": "open", "index": ["k"]}, "trigger_value": 1,
            "constraint": "y_k <= Cap_k"}, confidence=4, replaces=["c2"]),
        StructureProposal("Indicator", {
            "kind": "Indicator", "expand": [["k", "K"]],
            "trigger": {"var": "open", "index": ["k"]}, "trigger_value": 0,
            "constraint": "y_k <= 0"}, confidence=4, replaces=["c2"]),
    ]


def sos_proposal():
    return StructureProposal("SOS1", {
        "kind": "SOS1", "expand": [["i", "N"]],
        "members": [{"var": "T", "index": ["i", "j"], "over": [["j", "K"]]}],
    }, confidence=4)


class TestPool:
    def test_pool_has_the_five_kinds(self):
        pool = load_structure_pool()
        assert {t.kind for t in pool} == {"SOS1", "SOS2", "Indicator",
                                          "SemiContinuous", "PiecewiseLinear"}
        for t in pool:
            assert t.description and t.example and t.question


class TestVerify:
    def test_indicator_continuous_trigger_rejected(self):
        s = facility_state()
        proposal = StructureProposal("Indicator", {
            "kind": "Indicator", "expand": [["k", "K"]],
            "trigger": {"var": "y", "index": ["k"]}, "trigger_value": 1,
            "constraint": "y_k <= Cap_k"})
        ok, reason = verify_proposal(s, proposal)
        assert not ok and "not binary" in reason

    def test_sos_single_member_rejected(self):
        s = crew_state()
        proposal = StructureProposal("SOS1", {
            "kind": "SOS1",
            "members": [{"var": "MaxShift2", "index": []}],
        })
        s.add_symbol(Variable("MaxShift2", (), "scalar"))
        ok, reason = verify_proposal(s, proposal)
        assert not ok and ">=2" in reason

    def test_valid_sos_accepted(self):
        ok, reason = verify_proposal(crew_state(), sos_proposal())
        assert ok, reason

    def test_semicontinuous_bad_span_rejected(self):
        s = facility_state()
        proposal = StructureProposal("SemiContinuous", {
            "kind": "SemiContinuous", "expand": [["k", "K"]],
            "var": {"var": "y", "index": ["k"]}, "lower": 0.0, "upper": 5.0})
        ok, reason = verify_proposal(s, proposal)
        assert not ok and "lower" in reason

    def test_pwl_decreasing_breakpoints_rejected(self):
        s = facility_state()
        s.add_symbol(Variable("q", (), "volume"))
        s.add_symbol(Variable("fee", (), "fee"))
        proposal = StructureProposal("PiecewiseLinear", {
            "kind": "PiecewiseLinear", "x": {"var": "q", "index": []},
            "y": {"var": "fee", "index": []},
            "breakpoints": [[0, 0], [10, 5], [10, 9]]})
        ok, reason = verify_proposal(s, proposal)
        assert not ok and "increasing" in reason

    def test_unknown_member_rejected(self):
        proposal = StructureProposal("SOS1", {
            "kind": "SOS1", "members": [{"var": "ghost", "index": []},
                                        {"var": "alsoghost", "index": []}]})
        ok, reason = verify_proposal(crew_state(), proposal)
        assert not ok

    def test_replaced_clause_must_exist(self):
        s = facility_state()
        proposal = indicator_proposals()[0]
        proposal.replaces = ["c99"]
        ok, reason = verify_proposal(s, proposal)
        assert not ok and "c99" in reason

    def test_forced_nonzero_members_rejected(self):
        s = crew_state()
        s.add_symbol(Variable("w1", (), "always on", bounds=(1.0, 5.0)))
        s.add_symbol(Variable("w2", (), "also always on", bounds=(2.0, 5.0)))
        proposal = StructureProposal("SOS1", {
            "kind": "SOS1", "members": [{"var": "w1", "index": []},
                                        {"var": "w2", "index": []}]})
        ok, reason = verify_proposal(s, proposal)
        assert not ok and "nonzero" in reason

    def test_generated_invariant_violations_all_rejected(self):
        rng = np.random.default_rng(21)
        s = crew_state()
        s.add_symbol(Variable("solo", (), "scalar"))
        rejected = 0
        cases = []
        for _ in range(40):
            kind = rng.choice(["sos-small", "ind-cont", "semi-bad", "pwl-bad"])
            if kind == "sos-small":
                cases.append(StructureProposal("SOS1", {
                    "kind": "SOS1", "members": [{"var": "solo", "index": []}]}))
            elif kind == "ind-cont":
                cases.append(StructureProposal("Indicator", {
                    "kind": "Indicator", "expand": [["i", "N"], ["j", "K"]],
                    "trigger": {"var": "T", "index": ["i", "j"]},
                    "trigger_value": 1, "constraint": "T_{i,j} <= MaxShift"}))
            elif kind == "semi-bad":
                lo = float(rng.uniform(-3, 0))
                cases.append(StructureProposal("SemiContinuous", {
                    "kind": "SemiContinuous", "var": {"var": "solo", "index": []},
                    "lower": lo, "upper": lo + 1}))
            else:
                cases.append(StructureProposal("PiecewiseLinear", {
                    "kind": "PiecewiseLinear", "x": {"var": "solo", "index": []},
                    "y": {"var": "solo", "index": []},
                    "breakpoints": [[1, 0], [1, 1]]}))
        for case in cases:
            ok, _ = verify_proposal(s, case)
            if not ok:
                rejected += 1
        assert rejected == len(cases)


class TestOptimumPreservation:
    def _ground_with(self, state, annotations, drop=()):
        ctx = {"parameters": state.parameters, "variables": state.variables}
        doc = ModelDocument()
        for i, clause in enumerate(state.clauses.values()):
            if clause.id in drop:
                continue
            doc.fragments[f"f{i}"] = build_fragment(clause.id, clause.formulation, ctx)
        anns = [proposal_to_annotation(p, state) for p in annotations]
        return ground(doc.fragments.values(), state, annotations=anns)

    def test_indicator_annotated_equals_big_m_lowered(self):
        s = facility_state()
        annotated = self._ground_with(s, indicator_proposals(), drop=("c2",))
        got = solve(annotated)
        lowered, _ = lower_annotations(annotated, default_big_m=1e6)
        reference = solve(lowered)
        assert got.status is Status.OPTIMAL
        assert got.objective == pytest.approx(reference.objective, abs=1e-6)
        assert got.objective == pytest.approx(280.0, abs=1e-6)

    def test_sos1_annotated_equals_linking_lowered(self):
        s = crew_state()
        annotated = self._ground_with(s, [sos_proposal()])
        got = solve(annotated)
        lowered, _ = lower_annotations(annotated)
        reference = solve(lowered)
        assert got.objective == pytest.approx(reference.objective, abs=1e-6)
        assert got.objective == pytest.approx(25.0, abs=1e-6)


class TestDetection:
    def test_one_query_per_template_and_warning_on_errors(self):
        asked = []

        def detector(b):
            asked.append(b["structure_kind"])
            if b["structure_kind"] == "SOS2":
                return "garbage with no json {"
            return {"applicable": False, "proposals": [], "confidence": 5}

        events = []
        log = lambda *a, **k: events.append((a, k))
        gateway = Gateway(AuthoredBackend({"structure_detect": detector}),
                          reask_limit=0)
        proposals = detect_structures(crew_state(), gateway, log=log)
        assert proposals == []
        assert sorted(set(asked)) == ["Indicator", "PiecewiseLinear", "SOS1",
                                      "SOS2", "SemiContinuous"]
        assert any("SOS2" in k.get("detail", "") for _, k in events)

    def test_pure_lp_honest_transcript_empty(self):
        gateway = Gateway(AuthoredBackend({
            "structure_detect": lambda b: {"applicable": False, "proposals": [],
                                           "confidence": 5}}))
        s = State("blend")
        s.add_symbol(Variable("x", ()))
        s.add_clause(Clause("obj", "Objective", "o", formulation="minimize x",
                            status="Formulated"))
        assert detect_structures(s, gateway) == []


class TestClassify:
    def test_tour_description(self):
        gateway = Gateway(AuthoredBackend({
            "classify_problem": lambda b: {
                "detected": "TSP",
                "rationale": "asks for a single tour visiting every city once",
                "suggestion": "use a dedicated tour solver", "confidence": 4}}))
        advisory = classify_problem(
            "visit every city exactly once minimizing tour length", gateway)
        assert advisory.detected == "TSP"
        assert "tour" in advisory.suggestion

    def test_factory_is_none(self):
        gateway = Gateway(AuthoredBackend({
            "classify_problem": lambda b: {"detected": "None",
                                           "rationale": "plain blending LP",
                                           "confidence": 5}}))
        assert classify_problem("blend feeds at minimum cost", gateway).detected == "None"

    def test_sat_description(self):
        gateway = Gateway(AuthoredBackend({
            "classify_problem": lambda b: {"detected": "SAT",
                                           "rationale": "boolean clauses",
                                           "confidence": 4}}))
        assert classify_problem("satisfy all boolean clauses", gateway).detected == "SAT"

    def test_gateway_error_gives_none_with_warning(self):
        events = []
        gateway = Gateway(AuthoredBackend({}), reask_limit=0)
        advisory = classify_problem("anything", gateway,
                                    log=lambda *a, **k: events.append(k))
        assert advisory.detected == "None"
        assert events

    def test_classify_never_touches_state(self):
        s = crew_state()
        before = s.dumps()
        gateway = Gateway(AuthoredBackend({
            "classify_problem": lambda b: {"detected": "Routing", "confidence": 4}}))
        classify_problem(s.background, gateway)
        assert s.dumps() == before

    def test_unknown_class_rejected(self):
        with pytest.raises(ValueError):
            ProblemClassAdvisory(detected="Sudoku")
