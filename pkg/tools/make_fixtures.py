"""Regenerate the bundled fixtures: toy instances, scripted transcripts,
run configs, the large row-sifting LP, and golden files.

Run from the repo root after changing prompt bindings or instance content:

    python tools/make_fixtures.py

Transcripts are recorded by replaying authored responses through the real
pipeline, so the committed files always match the current fingerprinting.
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from milpforge.evaluation import Instance, load_instance, run_instance, score  # noqa: E402
from milpforge.ir import ModelDocument, ground  # noqa: E402
from milpforge.llm import AuthoredBackend, BackendSpec, RecordingBackend  # noqa: E402
from milpforge.lp_io import parse_lp, write_lp  # noqa: E402
from milpforge.pipeline import EventLog, Pipeline, RunConfig  # noqa: E402
from milpforge.sifting import SiftConfig, sift_constraints  # noqa: E402
from milpforge.solver import solve  # noqa: E402
from milpforge.state import State  # noqa: E402

DATA = ROOT / "src" / "milpforge" / "data"


# --- instance definitions ----------------------------------------------------

FACTORY_DESC = (
    "A factory makes three products on a single machine. One unit of the first "
    "product takes 2 machine hours, the second takes 4, and the third takes 3. "
    "The products earn 30, 50, and 40 dollars of profit per unit. The machine "
    "is available for 100 hours in total. Decide how much of each product to "
    "make so that total profit is as large as possible."
)

FACILITY_DESC = (
    "A retailer is deciding which of three candidate store sites to open. "
    "Opening the sites costs 50, 60, and 70 thousand dollars. An open site can "
    "stock at most 40, 50, and 60 pallets, at a handling cost of 2, 3, and 4 "
    "thousand dollars per pallet. A closed site stocks nothing. Together the "
    "open sites must stock at least 70 pallets to cover regional demand. "
    "Choose which sites to open and how much each stocks so that total cost "
    "(opening plus handling) is as small as possible."
)

CREW_DESC = (
    "An airline must staff two flights from a pool of three crew members. "
    "Assigning crew member 1 costs 10 for flight 1 and 20 for flight 2; crew "
    "member 2 costs 12 and 15; crew member 3 costs 30 and 25. Each crew member "
    "can work on at most one flight, and a crew member only logs working hours "
    "on a flight they are assigned to, up to the 8 hour shift cap. Flight 1 "
    "needs 8 total crew working hours and flight 2 needs 6. Minimize the total "
    "assignment cost while covering both flights' working-hour needs."
)


def factory_instance():
    return {
        "id": "factory",
        "description": FACTORY_DESC,
        "data": {"Hours": [2, 4, 3], "Profit": [30, 50, 40], "MaxHours": 100},
        "truth": {"objective": 1500.0, "status": "Optimal",
                  "assignment": {"x[0]": 50.0, "x[1]": 0.0, "x[2]": 0.0}},
        "labels": ["production-planning", "lp"],
    }


def facility_instance():
    return {
        "id": "facility",
        "description": FACILITY_DESC,
        "data": {"OpenCost": [50, 60, 70], "HandleCost": [2, 3, 4],
                 "Cap": [40, 50, 60], "Demand": 70},
        "truth": {"objective": 280.0, "status": "Optimal",
                  "assignment": {"open[0]": 1.0, "open[1]": 1.0, "open[2]": 0.0,
                                 "y[0]": 40.0, "y[1]": 30.0, "y[2]": 0.0}},
        "labels": ["facility-location", "milp", "indicator"],
    }


def crew_instance():
    return {
        "id": "crew",
        "description": CREW_DESC,
        "data": {"Cost": [[10, 20], [12, 15], [30, 25]], "Need": [8, 6], "MaxShift": 8},
        "truth": {"objective": 25.0, "status": "Optimal",
                  "assignment": {"assign[0,0]": 1.0, "assign[1,1]": 1.0,
                                 "T[0,0]": 8.0, "T[1,1]": 6.0}},
        "labels": ["crew-assignment", "milp", "sos1"],
    }


# --- authored responses ------------------------------------------------------


def base_handlers():
    return {
        "reflect_item": lambda b: {"verdict": "ok", "confidence": 5},
        "reflect_collection": lambda b: {"verdict": "ok", "confidence": 5},
        "structure_detect": lambda b: {"applicable": False, "proposals": [],
                                       "confidence": 5},
        "classify_problem": lambda b: {"detected": "None",
                                       "rationale": "no special class fits",
                                       "confidence": 4},
    }


def factory_handlers(code_texts=None, debug=None):
    code_texts = code_texts or {}

    def extract_params(b):
        return {"background": "A factory plans production volumes for three products.",
                "parameters": [
                    {"symbol": "Hours", "shape": ["K"],
                     "definition": "machine hours needed per unit of product",
                     "values": [2, 4, 3]},
                    {"symbol": "Profit", "shape": ["K"],
                     "definition": "profit per unit of product",
                     "values": [30, 50, 40]},
                    {"symbol": "MaxHours", "shape": [],
                     "definition": "total machine hours available", "values": 100},
                ], "confidence": 5}

    def extract_clauses(b):
        return {"constraints": [
            "Total machine hours used across all products cannot exceed the available hours."],
            "objective": "Maximize total profit across all products.", "confidence": 5}

    def formulate(b):
        if "machine hours" in b["clause_description"]:
            return {"formulation": "sum_j Hours_j x_j <= MaxHours",
                    "new_variables": [{"symbol": "x", "shape": ["K"],
                                       "definition": "units of each product to make",
                                       "vartype": "Continuous"}],
                    "symbols_used": ["Hours", "x", "MaxHours"], "confidence": 5}
        return {"formulation": "maximize sum_j Profit_j x_j", "new_variables": [],
                "symbols_used": ["Profit", "x"], "confidence": 5}

    def code(b):
        text = code_texts.get("c1" if "machine hours" in b["clause_description"] else "obj")
        return {"ir_text": text or b["formulation"], "confidence": 5}

    handlers = dict(base_handlers())
    handlers.update({
        "extract_params": extract_params,
        "extract_clauses": extract_clauses,
        "formulate_clause": formulate,
        "code_clause": code,
    })
    if debug is not None:
        handlers["debug"] = debug
    return handlers


def facility_handlers():
    def extract_params(b):
        return {"background": "A retailer picks store sites to open and stocks them.",
                "parameters": [
                    {"symbol": "OpenCost", "shape": ["K"],
                     "definition": "cost of opening each candidate site",
                     "values": [50, 60, 70]},
                    {"symbol": "HandleCost", "shape": ["K"],
                     "definition": "handling cost per pallet stocked at each site",
                     "values": [2, 3, 4]},
                    {"symbol": "Cap", "shape": ["K"],
                     "definition": "maximum pallets an open site can stock",
                     "values": [40, 50, 60]},
                    {"symbol": "Demand", "shape": [],
                     "definition": "total pallets the open sites must stock",
                     "values": 70},
                ], "confidence": 5}

    def extract_clauses(b):
        return {"constraints": [
            "The open sites together must stock at least the regional demand.",
            "A site stocks at most its capacity when open and nothing when closed."],
            "objective": "Minimize total opening cost plus handling cost.",
            "confidence": 5}

    def formulate(b):
        d = b["clause_description"]
        if "regional demand" in d:
            return {"formulation": "sum_k y_k >= Demand",
                    "new_variables": [{"symbol": "y", "shape": ["K"],
                                       "definition": "pallets stocked at each site",
                                       "vartype": "Continuous"}],
                    "symbols_used": ["y", "Demand"], "confidence": 5}
        if "capacity" in d:
            return {"formulation": "y_k <= Cap_k open_k forall k",
                    "new_variables": [{"symbol": "open", "shape": ["K"],
                                       "definition": "1 when the site is opened",
                                       "vartype": "Binary"}],
                    "symbols_used": ["y", "Cap", "open"], "confidence": 3}
        return {"formulation":
                "minimize sum_k OpenCost_k open_k + sum_k HandleCost_k y_k",
                "new_variables": [], "symbols_used": ["OpenCost", "open", "HandleCost", "y"],
                "confidence": 5}

    def structure(b):
        if b["structure_kind"] != "Indicator":
            return {"applicable": False, "proposals": [], "confidence": 5}
        return {"applicable": True, "proposals": [
            {"kind": "Indicator", "expand": [["k", "K"]],
             "trigger": {"var": "open", "index": ["k"]}, "trigger_value": 1,
             "constraint": "y_k <= Cap_k", "replaces": ["c2"]},
            {"kind": "Indicator", "expand": [["k", "K"]],
             "trigger": {"var": "open", "index": ["k"]}, "trigger_value": 0,
             "constraint": "y_k <= 0", "replaces": ["c2"]},
        ], "confidence": 4}

    handlers = dict(base_handlers())
    handlers.update({
        "extract_params": extract_params,
        "extract_clauses": extract_clauses,
        "formulate_clause": formulate,
        "code_clause": lambda b: {"ir_text": b["formulation"], "confidence": 5},
        "structure_detect": structure,
    })
    return handlers


def crew_handlers():
    def extract_params(b):
        return {"background": "An airline assigns crew members to flights.",
                "parameters": [
                    {"symbol": "Cost", "shape": ["N", "K"],
                     "definition": "cost of assigning each crew member to each flight",
                     "values": [[10, 20], [12, 15], [30, 25]]},
                    {"symbol": "Need", "shape": ["K"],
                     "definition": "crew working hours each flight requires",
                     "values": [8, 6]},
                    {"symbol": "MaxShift", "shape": [],
                     "definition": "maximum working hours per crew member shift",
                     "values": 8},
                ], "confidence": 5}

    def extract_clauses(b):
        return {"constraints": [
            "Each crew member can work on at most one flight.",
            "A crew member logs hours on a flight only when assigned, up to the shift cap.",
            "Each flight receives at least its required total crew working hours."],
            "objective": "Minimize the total assignment cost.", "confidence": 5}

    def formulate(b):
        d = b["clause_description"]
        if "at most one flight" in d:
            return {"formulation": "sum_j assign_{i,j} <= 1 forall i",
                    "new_variables": [{"symbol": "assign", "shape": ["N", "K"],
                                       "definition": "1 when a crew member works a flight",
                                       "vartype": "Binary"}],
                    "symbols_used": ["assign"], "confidence": 5}
        if "shift cap" in d:
            # deliberately low confidence: surfaces a review card in the UI
            return {"formulation": "T_{i,j} <= MaxShift assign_{i,j} forall i, j",
                    "new_variables": [{"symbol": "T", "shape": ["N", "K"],
                                       "definition": "working hours a crew member logs on a flight",
                                       "vartype": "Continuous"}],
                    "symbols_used": ["T", "MaxShift", "assign"], "confidence": 3}
        if "required total" in d:
            return {"formulation": "sum_i T_{i,j} >= Need_j forall j",
                    "new_variables": [], "symbols_used": ["T", "Need"], "confidence": 5}
        return {"formulation": "minimize sum_{i,j} Cost_{i,j} assign_{i,j}",
                "new_variables": [], "symbols_used": ["Cost", "assign"], "confidence": 5}

    def structure(b):
        if b["structure_kind"] != "SOS1":
            return {"applicable": False, "proposals": [], "confidence": 5}
        return {"applicable": True, "proposals": [
            {"kind": "SOS1", "expand": [["i", "N"]],
             "members": [{"var": "T", "index": ["i", "j"], "over": [["j", "K"]]}]},
        ], "confidence": 4}

    handlers = dict(base_handlers())
    handlers.update({
        "extract_params": extract_params,
        "extract_clauses": extract_clauses,
        "formulate_clause": formulate,
        "code_clause": lambda b: {"ir_text": b["formulation"], "confidence": 5},
        "structure_detect": structure,
    })
    return handlers


# --- recording ----------------------------------------------------------------


def record_run(instance_doc, handlers, config_overrides=None):
    """Run the pipeline with authored answers; return (transcript, outcome)."""
    spec = BackendSpec(kind="scripted", transcript="placeholder.json")
    overrides = config_overrides or {}
    config = RunConfig(backend=spec, **overrides)
    recorder = RecordingBackend(AuthoredBackend(handlers))
    log = EventLog()
    pipeline = Pipeline(config, state=State(), doc=ModelDocument(), log=log,
                        backend=recorder, project_id=instance_doc["id"])
    outcome = pipeline.run(instance_doc["description"])
    return recorder.recorded, outcome, pipeline


def verify_replay(instance_path, transcript_path, expect_status="Optimal",
                  overrides=None):
    inst = load_instance(instance_path)
    config = RunConfig(
        backend=BackendSpec(kind="scripted", transcript=str(transcript_path)),
        **(overrides or {}),
    )
    outcome, log, model = run_instance(inst, config)
    record = score(outcome, inst, model, log)
    return outcome, record


def main():
    for sub in ("instances", "transcripts", "configs", "lp", "golden"):
        (DATA / sub).mkdir(parents=True, exist_ok=True)

    instances = {
        "factory": (factory_instance(), factory_handlers()),
        "facility": (facility_instance(), facility_handlers()),
        "crew": (crew_instance(), crew_handlers()),
    }

    merged_clean = {}
    for name, (doc, handlers) in instances.items():
        inst_path = DATA / "instances" / f"{name}.json"
        inst_path.write_text(json.dumps(doc, indent=2) + "\n")
        transcript, outcome, _ = record_run(doc, handlers)
        assert outcome.status == "Optimal", (name, outcome)
        tr_path = DATA / "transcripts" / f"{name}.json"
        tr_path.write_text(json.dumps(transcript, indent=1, sort_keys=True) + "\n")
        merged_clean.update(transcript)
        out, rec = verify_replay(inst_path, tr_path)
        assert rec.solved, (name, out, rec)
        print(f"{name}: objective {out.objective} solved={rec.solved} "
              f"({len(transcript)} transcript entries)")

    # faulty factory: the coding stage emits an out-of-range subscript, the
    # grounding failure reaches the debug loop, one authored fix succeeds
    faulty_doc = dict(factory_instance())
    fixed_debug = lambda b: {"fragments": [
        {"clause_id": "c1", "ir_text": "sum_j Hours_j x_j <= MaxHours"}],
        "confidence": 4}
    handlers = factory_handlers(code_texts={"c1": "sum_j Hours_j x_4 <= MaxHours"},
                                debug=fixed_debug)
    transcript, outcome, pipeline = record_run(faulty_doc, handlers)
    assert outcome.status == "Optimal" and pipeline.debug_attempts == 1, (
        outcome, pipeline.debug_attempts)
    (DATA / "transcripts" / "factory_faulty.json").write_text(
        json.dumps(transcript, indent=1, sort_keys=True) + "\n")
    merged_faulty = dict(merged_clean)
    merged_faulty.update(transcript)
    print(f"factory_faulty: repaired on attempt {pipeline.debug_attempts}")

    # stuck factory: the debug loop never produces a fix; five attempts recorded
    stuck_debug = lambda b: {"fragments": [
        {"clause_id": "c1", "ir_text": "sum_j Hours_j x_4 <= MaxHours"}],
        "confidence": 2}
    handlers = factory_handlers(code_texts={"c1": "sum_j Hours_j x_4 <= MaxHours"},
                                debug=stuck_debug)
    transcript, outcome, pipeline = record_run(faulty_doc, handlers)
    assert outcome.status == "Error" and pipeline.debug_attempts == 5, (
        outcome, pipeline.debug_attempts)
    (DATA / "transcripts" / "factory_stuck.json").write_text(
        json.dumps(transcript, indent=1, sort_keys=True) + "\n")
    print(f"factory_stuck: exhausted after {pipeline.debug_attempts} attempts")

    (DATA / "transcripts" / "suite_clean.json").write_text(
        json.dumps(merged_clean, indent=1, sort_keys=True) + "\n")
    (DATA / "transcripts" / "suite_faulty.json").write_text(
        json.dumps(merged_faulty, indent=1, sort_keys=True) + "\n")

    for name in ("factory", "facility", "crew"):
        (DATA / "configs" / f"{name}_scripted.json").write_text(json.dumps({
            "backend": {"kind": "scripted",
                        "transcript": f"../transcripts/{name}.json"},
        }, indent=2) + "\n")
    (DATA / "configs" / "suite_clean.json").write_text(json.dumps({
        "backend": {"kind": "scripted", "transcript": "../transcripts/suite_clean.json"},
    }, indent=2) + "\n")
    (DATA / "configs" / "suite_faulty.json").write_text(json.dumps({
        "backend": {"kind": "scripted", "transcript": "../transcripts/suite_faulty.json"},
    }, indent=2) + "\n")

    make_scuc_like()
    make_goldens()
    print("fixtures regenerated")


def make_scuc_like():
    """Unit-commitment-flavored LP with many inactive rows, for row sifting."""
    rng = np.random.default_rng(42)
    G, T = 10, 24
    n = G * T
    pmax = rng.uniform(30, 120, G)
    cost = rng.uniform(5, 50, G)
    base = 0.55 * pmax.sum()
    swing = 0.25 * pmax.sum()
    demand = base + swing * np.sin(np.linspace(0, 2 * np.pi, T))
    ramp = 0.35 * pmax

    def col(g, t):
        return g * T + t

    rows = []  # (coeffs dict, sense, rhs, name)
    for t in range(T):
        rows.append(({col(g, t): 1.0 for g in range(G)}, ">=", demand[t], f"demand_{t}"))
    for t in range(T):
        # reserve: total unused capacity stays above 5% of fleet capacity
        rows.append(({col(g, t): 1.0 for g in range(G)}, "<=",
                     0.95 * pmax.sum(), f"reserve_{t}"))
    for g in range(G):
        for t in range(T - 1):
            rows.append(({col(g, t + 1): 1.0, col(g, t): -1.0}, "<=", ramp[g],
                         f"rampup_{g}_{t}"))
            rows.append(({col(g, t): 1.0, col(g, t + 1): -1.0}, "<=", ramp[g],
                         f"rampdn_{g}_{t}"))
    C = 22
    for c in range(C):
        weights = rng.uniform(0.2, 1.0, G) * (rng.uniform(0, 1, G) < 0.6)
        cap = 0.92 * float(weights @ pmax)
        for t in range(T):
            coeffs = {col(g, t): float(weights[g]) for g in range(G) if weights[g]}
            if coeffs:
                rows.append((coeffs, "<=", cap, f"security_{c}_{t}"))

    import scipy.sparse as sp

    from milpforge.ir import GroundModel

    data, ri, ci, b, senses, names = [], [], [], [], [], []
    for i, (coeffs, sense, rhs, name) in enumerate(rows):
        for j, v in coeffs.items():
            data.append(v)
            ri.append(i)
            ci.append(j)
        b.append(rhs)
        senses.append(sense)
        names.append(name)
    model = GroundModel(
        sense="minimize",
        c=np.repeat(cost, T),
        obj_const=0.0,
        A=sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n)),
        b=np.array(b),
        senses=senses,
        lb=np.zeros(n),
        ub=np.repeat(pmax, T),
        integrality=np.zeros(n, dtype=int),
        col_names=[f"p_{g}_{t}" for g in range(G) for t in range(T)],
        row_names=names,
    )
    full = solve(model)
    assert full.status.value == "Optimal", full.status
    sol, hist = sift_constraints(model, SiftConfig(initial_size=60, seed=11))
    active = hist.rows[-1]["active"]
    assert abs(sol.objective - full.objective) <= 1e-6 * max(1, abs(full.objective))
    assert active < 0.5 * model.num_rows, (active, model.num_rows)
    (DATA / "lp" / "scuc_like.lp").write_text(write_lp(model))
    print(f"scuc_like: m={model.num_rows} n={model.num_cols} "
          f"full={full.objective:.4f} sift={sol.objective:.4f} "
          f"active={active} ({active / model.num_rows:.0%})")


def make_goldens():
    from milpforge.state import Clause, Parameter, Variable

    # two-variable LP golden: max 3x + 2y; x + y <= 4; x <= 2
    import math

    import scipy.sparse as sp

    from milpforge.ir import GroundModel

    model = GroundModel(
        sense="maximize",
        c=np.array([3.0, 2.0]),
        obj_const=0.0,
        A=sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]])),
        b=np.array([4.0, 2.0]),
        senses=["<=", "<="],
        lb=np.zeros(2),
        ub=np.full(2, math.inf),
        integrality=np.zeros(2, dtype=int),
        col_names=["x", "y"],
        row_names=["c1", "c2"],
    )
    text = write_lp(model)
    assert parse_lp(text).content_equal(model)
    (DATA / "golden" / "two_var.lp").write_text(text)

    state = State(background="A factory plans production volumes for three products.")
    state.add_symbol(Parameter("Hours", ("K",), "machine hours needed per unit of product"))
    state.add_symbol(Parameter("Profit", ("K",), "profit per unit of product"))
    state.add_symbol(Parameter("MaxHours", (), "total machine hours available"))
    state.add_symbol(Variable("x", ("K",), "units of each product to make"))
    state.add_clause(Clause("c1", "Constraint",
                            "Total machine hours cannot exceed the available hours.",
                            formulation="sum_j Hours_j x_j <= MaxHours",
                            status="Formulated", confidence=5))
    state.add_clause(Clause("obj", "Objective", "Maximize total profit.",
                            formulation="maximize sum_j Profit_j x_j",
                            status="Formulated", confidence=5))
    for cid, symbols in (("c1", ["Hours", "x", "MaxHours"]), ("obj", ["Profit", "x"])):
        for s in symbols:
            state.connect(cid, s)
    state.bind_data("Hours", [2, 4, 3])
    state.bind_data("Profit", [30, 50, 40])
    state.bind_data("MaxHours", 100)
    (DATA / "golden" / "factory_state.json").write_text(state.dumps())
    assert State.load(DATA / "golden" / "factory_state.json") == state
    print("goldens written")


if __name__ == "__main__":
    main()
