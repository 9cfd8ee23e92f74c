"""Walk the staged pipeline over the bundled factory instance, stage by stage.

The run replays a recorded transcript, so it is deterministic and offline.
Watch the state grow: parameters with detached data, clauses, the connection
graph, formulations, machine notation, and finally a solved model.
"""

from pathlib import Path

from milpforge.evaluation import load_instance
from milpforge.ir import ModelDocument, ground
from milpforge.llm import BackendSpec
from milpforge.lp_io import write_lp
from milpforge.pipeline import EventLog, Pipeline, RunConfig
from milpforge.state import State

DATA = Path(__file__).parent.parent / "src" / "milpforge" / "data"


def main():
    instance = load_instance(DATA / "instances" / "factory.json")
    config = RunConfig(backend=BackendSpec(
        kind="scripted", transcript=str(DATA / "transcripts" / "factory.json")))
    pipeline = Pipeline(config, state=State(), doc=ModelDocument(), log=EventLog())

    print("== problem description ==")
    print(instance.description, "\n")

    pipeline.extract_parameters(instance.description)
    print("== extracted parameters (data lives in the data store, not prompts) ==")
    for p in pipeline.state.parameters.values():
        values = pipeline.state.data_store.get(p.symbol)
        print(f"  {p.symbol} shape {list(p.shape)}: {p.definition}"
              f"   [data: {values.tolist() if values is not None else 'none'}]")

    pipeline.extract_clauses()
    print("\n== extracted clauses ==")
    for c in pipeline.state.clauses.values():
        print(f"  {c.id} ({c.kind.value}): {c.description}")

    pipeline.formulate_all()
    print("\n== formulations and connection graph ==")
    for c in pipeline.state.clauses.values():
        print(f"  {c.id}: {c.formulation}")
        print(f"      edges: {pipeline.state.graph.neighbors(c.id)}")

    pipeline.code_all()
    print("\n== machine notation ==")
    for fid, fragment in pipeline.doc.fragments.items():
        print(f"  {fid}: {fragment.render()}")

    outcome = pipeline.assemble_and_solve()
    print("\n== solved ==")
    print(f"  status {outcome.status}, objective {outcome.objective}")
    print(f"  plan: {outcome.primal}")

    model = ground(pipeline.doc, pipeline.state)
    print("\n== LP emission ==")
    print(write_lp(model))


if __name__ == "__main__":
    main()
