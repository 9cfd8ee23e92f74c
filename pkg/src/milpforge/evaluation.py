"""Benchmark harness: load instances, run the pipeline, score outcomes.

An instance is solved when the run finishes, the optimal value matches the
recorded truth, and the returned assignment is feasible for the built model
and attains that value. Matching is numeric throughout; alternate optima
count as correct.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MilpforgeError, SchemaViolation
from .ir import ModelDocument, ground
from .pipeline import EventLog, Pipeline, RunConfig, SolveOutcome
from .solver import check_feasible
from .state import State

VALUE_TOL = 1e-6

ABLATION_FLAGS = ("disable_debug", "disable_extraction_ec", "disable_modeling_ec",
                  "disable_llm_feedback")


@dataclass
class Instance:
    id: str
    description: str
    data: dict = field(default_factory=dict)
    truth_objective: Optional[float] = None
    truth_status: str = "Optimal"
    truth_assignment: Optional[dict] = None
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.truth_status == "Optimal":
            if self.truth_objective is None or not np.isfinite(self.truth_objective):
                raise SchemaViolation("$.truth.objective",
                                      "an Optimal truth needs a finite objective")
        elif self.truth_status not in ("Infeasible", "Unbounded"):
            raise SchemaViolation("$.truth.status",
                                  f"unknown truth status '{self.truth_status}'")


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(str(path), f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation(str(path), "instance file must hold an object")
    unknown = set(doc) - {"id", "description", "data", "truth", "labels"}
    if unknown:
        raise SchemaViolation(str(path), f"unknown fields {sorted(unknown)}")
    for key in ("id", "description", "truth"):
        if key not in doc:
            raise SchemaViolation(f"{path}:$.{key}", "missing required field")
    truth = doc["truth"]
    if not isinstance(truth, dict):
        raise SchemaViolation(f"{path}:$.truth", "truth must be an object")
    return Instance(
        id=str(doc["id"]),
        description=str(doc["description"]),
        data=dict(doc.get("data", {})),
        truth_objective=truth.get("objective"),
        truth_status=truth.get("status", "Optimal"),
        truth_assignment=truth.get("assignment"),
        labels=list(doc.get("labels", [])),
    )


@dataclass
class ScoreRecord:
    instance_id: str
    ran: bool
    value_correct: bool
    solution_correct: bool
    failure_stage: str = "None"  # Extraction | Formulation | Coding | None

    @property
    def solved(self) -> bool:
        return self.ran and self.value_correct and self.solution_correct

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "ran": self.ran,
                "value_correct": self.value_correct,
                "solution_correct": self.solution_correct,
                "solved": self.solved, "failure_stage": self.failure_stage}


_STAGE_GROUP = {
    "ExtractParams": "Extraction",
    "ExtractClauses": "Extraction",
    "Formulate": "Formulation",
    "Code": "Coding",
    "Assemble": "Coding",
    "SolveDebug": "Coding",
}


def failure_stage_of(log: EventLog) -> str:
    stage = log.first_error_stage()
    return _STAGE_GROUP.get(stage, "None") if stage else "None"


def score(outcome: SolveOutcome, instance: Instance, model=None,
          log: Optional[EventLog] = None) -> ScoreRecord:
    """Three-condition scoring: ran, value correct, solution correct."""
    failure = failure_stage_of(log) if log is not None else "None"
    ran = outcome.status != "Error"
    if not ran:
        return ScoreRecord(instance.id, False, False, False,
                           failure if failure != "None" else "Coding")
    if instance.truth_status != "Optimal":
        match = outcome.status == instance.truth_status
        return ScoreRecord(instance.id, True, match, match, failure)
    if outcome.status != "Optimal" or outcome.objective is None:
        return ScoreRecord(instance.id, True, False, False, failure)
    tol = max(VALUE_TOL, VALUE_TOL * abs(instance.truth_objective))
    value_ok = abs(outcome.objective - instance.truth_objective) <= tol
    solution_ok = False
    if outcome.primal is not None and model is not None:
        try:
            x = np.array([outcome.primal[name] for name in model.col_names])
            attained = float(model.c @ x) + model.obj_const
            solution_ok = (check_feasible(model, x)
                           and abs(attained - instance.truth_objective) <= tol)
        except (KeyError, ValueError):
            solution_ok = False
    return ScoreRecord(instance.id, True, value_ok, solution_ok, failure)


def apply_ablations(config: RunConfig, flags) -> RunConfig:
    unknown = set(flags) - set(ABLATION_FLAGS)
    if unknown:
        raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
    updates = {}
    if "disable_debug" in flags:
        updates["max_debug_attempts"] = 0
    if "disable_extraction_ec" in flags:
        updates["reflect_extraction"] = False
    if "disable_modeling_ec" in flags:
        updates["reflect_modeling"] = False
    if "disable_llm_feedback" in flags:
        updates["escalation_route"] = "Off"
    return replace(config, **updates)


def run_instance(instance: Instance, config: RunConfig):
    """Run the pipeline on one instance. Returns (outcome, log, model or None)."""
    log = EventLog()
    pipeline = Pipeline(config, state=State(), doc=ModelDocument(), log=log,
                        project_id=instance.id)
    outcome = pipeline.run(instance.description)
    model = None
    if outcome.status == "Optimal":
        try:
            model = ground(pipeline.doc, pipeline.state)
        except MilpforgeError:
            model = None
    return outcome, log, model


@dataclass
class Report:
    records: list
    ablations: list = field(default_factory=list)

    @property
    def accuracy(self) -> Optional[float]:
        if not self.records:
            return None
        return sum(1 for r in self.records if r.solved) / len(self.records)

    def to_dict(self) -> dict:
        return {
            "ablations": list(self.ablations),
            "total": len(self.records),
            "solved": sum(1 for r in self.records if r.solved),
            "accuracy": self.accuracy,
            "records": [r.to_dict() for r in self.records],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["instance_id", "ran", "value_correct",
                                                 "solution_correct", "solved",
                                                 "failure_stage"])
        writer.writeheader()
        for r in self.records:
            writer.writerow(r.to_dict())
        return buf.getvalue()


def run_suite(instances, config: RunConfig, ablations=(), workers: int = 1) -> Report:
    """Score every instance; per-instance failures are recorded, never fatal."""
    effective = apply_ablations(config, ablations)

    def one(instance: Instance) -> ScoreRecord:
        try:
            outcome, log, model = run_instance(instance, effective)
        except MilpforgeError as exc:
            return ScoreRecord(instance.id, False, False, False, "Extraction")
        return score(outcome, instance, model, log)

    if workers > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, instances))
    else:
        records = [one(i) for i in instances]
    return Report(records=records, ablations=list(ablations))
