"""Command-line interface.

Errors print machine-readable JSON to stderr and exit nonzero: 2 for stage
precondition violations, 1 for everything else.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import evaluation
from .errors import MilpforgeError, StagePrecondition
from .ir import ModelDocument, ground
from .llm import BackendSpec
from .lp_io import parse_lp, write_lp
from .pipeline import EventLog, Pipeline, RunConfig
from .projects import ProjectStore, run_stage
from .sifting import SiftConfig, sift_columns, sift_constraints
from .solver import Status
from .state import State


def _fail(exc: Exception) -> None:
    code = 2 if isinstance(exc, StagePrecondition) else 1
    payload = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _load_config(path) -> RunConfig:
    return RunConfig.from_file(path)


@click.group()
def main():
    """Natural-language optimization modeling engine."""


@main.command()
@click.argument("instance", type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Run config JSON (backend spec, thresholds, flags).")
@click.option("--events", type=click.Path(), default=None,
              help="Also append the event log to this JSON-lines file.")
def run(instance, config_path, events):
    """Run the full pipeline on an instance file; print the outcome JSON."""
    try:
        inst = evaluation.load_instance(instance)
        config = _load_config(config_path)
        log = EventLog(path=events)
        pipeline = Pipeline(config, state=State(), doc=ModelDocument(), log=log,
                            project_id=inst.id)
        outcome = pipeline.run(inst.description)
    except MilpforgeError as exc:
        _fail(exc)
    click.echo(json.dumps(outcome.to_dict(), indent=2))
    sys.exit(0 if outcome.status != "Error" else 1)


@main.command()
@click.argument("description")
@click.option("--root", required=True, type=click.Path(), help="Project store directory.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--project-id", default=None)
def init(description, root, config_path, project_id):
    """Create a project for stage-by-stage runs."""
    try:
        config = json.loads(Path(config_path).read_text()) if config_path else None
        project = ProjectStore(root).create(description, project_id=project_id,
                                            config=config)
    except (MilpforgeError, OSError, json.JSONDecodeError) as exc:
        _fail(exc)
    click.echo(json.dumps({"id": project.id}))


@main.command()
@click.argument("project_id")
@click.argument("stage")
@click.option("--root", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def stage(project_id, stage, root, config_path):
    """Execute one pipeline stage on a stored project."""
    try:
        store = ProjectStore(root)
        config = _load_config(config_path) if config_path else None
        outcome = run_stage(store, project_id, stage, config)
    except MilpforgeError as exc:
        _fail(exc)
    state = ProjectStore(root).load_state(project_id)
    result = {"stage": stage, "done": True,
              "outcome": outcome.to_dict() if outcome else None,
              "clauses": len(state.clauses), "parameters": len(state.parameters)}
    click.echo(json.dumps(result, indent=2))


@main.command()
@click.option("--suite", required=True, type=click.Path(exists=True),
              help="Directory of instance JSON files.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--ablate", multiple=True, type=click.Choice(evaluation.ABLATION_FLAGS))
@click.option("--workers", default=1, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
def eval(suite, config_path, ablate, workers, csv_path):
    """Score a suite of instances; print the report JSON."""
    try:
        instances = [evaluation.load_instance(p)
                     for p in sorted(Path(suite).glob("*.json"))]
        config = _load_config(config_path)
        report = evaluation.run_suite(instances, config, ablations=list(ablate),
                                      workers=workers)
    except (MilpforgeError, ValueError) as exc:
        _fail(exc)
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
    click.echo(json.dumps(report.to_dict(), indent=2))


@main.command()
@click.argument("mode", type=click.Choice(["columns", "rows"]))
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--init-k", default=0, show_default=True,
              help="Initial subset size (0 picks a default).")
@click.option("--gap", type=float, default=None, help="Relative-gap early stop.")
@click.option("--batch-cap", default=0, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Write per-iteration history CSV here.")
def sift(mode, model_path, seed, init_k, gap, batch_cap, csv_path):
    """Sifting demo on an LP file; prints the summary, optionally dumps history."""
    try:
        model = parse_lp(Path(model_path).read_text())
        config = SiftConfig(initial_size=init_k, seed=seed, gap_stop=gap,
                            batch_cap=batch_cap)
        if mode == "columns":
            if any(s != "=" for s in model.senses) or model.integrality.any():
                raise MilpforgeError(
                    "column sifting expects standard form: equality rows, "
                    "continuous variables, x >= 0")
            solution, history = sift_columns(model.c, model.A, model.b, config)
        else:
            solution, history = sift_constraints(model, config)
    except MilpforgeError as exc:
        _fail(exc)
    if csv_path:
        Path(csv_path).write_text(history.to_csv())
    click.echo(json.dumps({
        "status": solution.status.value,
        "objective": solution.objective,
        "iterations": len(history.rows),
        "final_active": history.rows[-1]["active"] if history.rows else 0,
        "total": model.A.shape[1] if mode == "columns" else model.A.shape[0],
        "terminated_by": history.terminated_by,
    }, indent=2))


@main.command()
@click.argument("model_a", type=click.Path(exists=True))
@click.argument("model_b", type=click.Path(exists=True))
@click.option("--budget", default=10_000_000, show_default=True)
@click.option("--tol", type=float, default=None,
              help="Numeric tolerance for coefficient labels (default exact).")
def equiv(model_a, model_b, budget, tol):
    """Check two LP files for strict formulation equivalence."""
    from .equivalence import Correspondence, check_equivalence, to_graph

    try:
        g1 = to_graph(parse_lp(Path(model_a).read_text()), tol=tol)
        g2 = to_graph(parse_lp(Path(model_b).read_text()), tol=tol)
        result = check_equivalence(g1, g2, budget=budget)
    except MilpforgeError as exc:
        _fail(exc)
    if isinstance(result, Correspondence):
        click.echo(json.dumps({"equivalent": True,
                               "variables": result.variables,
                               "constraints": result.constraints}, indent=2))
    else:
        click.echo(json.dumps({"equivalent": False, "reason": result.reason,
                               "detail": result.detail}, indent=2))
        sys.exit(1)


@main.group()
def lp():
    """LP-format utilities."""


@lp.command("write")
@click.argument("model_path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), default=None)
def lp_write(model_path, output):
    """Canonicalize an LP file (parse and re-emit with deterministic layout)."""
    try:
        text = write_lp(parse_lp(Path(model_path).read_text()))
    except MilpforgeError as exc:
        _fail(exc)
    if output:
        Path(output).write_text(text)
        click.echo(json.dumps({"written": output}))
    else:
        click.echo(text, nl=False)


@lp.command("check")
@click.argument("model_path", type=click.Path(exists=True))
def lp_check(model_path):
    """Verify parse -> write -> parse reproduces the model exactly."""
    try:
        original = parse_lp(Path(model_path).read_text())
        emitted = write_lp(original)
        reparsed = parse_lp(emitted)
        ok = original.content_equal(reparsed)
        stable = write_lp(reparsed) == emitted
    except MilpforgeError as exc:
        _fail(exc)
    click.echo(json.dumps({"roundtrip": bool(ok), "stable": bool(stable),
                           "rows": original.num_rows, "columns": original.num_cols}))
    if not (ok and stable):
        sys.exit(1)


@main.command()
@click.option("--root", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--auth-token", default=None)
def serve(root, config_path, host, port, auth_token):
    """Start the review service."""
    from .service import serve as _serve

    _serve(root, config_path=config_path, host=host, port=port, auth_token=auth_token)


if __name__ == "__main__":
    main()
