"""Filesystem project store shared by the CLI and the HTTP service.

A project is a directory: state.json, fragments.json, events.jsonl,
project.json (metadata + description + latest outcome), reviews.json,
notifications.json, and artifacts/ holding immutable content-hash-named
snapshots.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .correction import PendingReview
from .errors import MilpforgeError, SchemaViolation
from .ir import ModelDocument, document_from_dict, document_to_dict
from .pipeline import EventLog, Pipeline, RunConfig, SolveOutcome, Stage, derive_stage
from .state import State
from .structure import ProblemClassAdvisory


@dataclass
class Project:
    id: str
    name: str
    description: str
    created: float
    outcome: Optional[dict] = None


class ProjectStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, project_id: str) -> Path:
        return self.root / project_id

    def list_projects(self) -> list:
        out = []
        for path in sorted(self.root.iterdir()):
            if (path / "project.json").exists():
                out.append(json.loads((path / "project.json").read_text()))
        return out

    def exists(self, project_id: str) -> bool:
        return (self._dir(project_id) / "project.json").exists()

    def create(self, description: str, name: str = "", project_id: Optional[str] = None,
               config: Optional[dict] = None) -> Project:
        pid = project_id or uuid.uuid4().hex[:12]
        pdir = self._dir(pid)
        if (pdir / "project.json").exists():
            raise SchemaViolation(str(pdir), f"project '{pid}' already exists")
        pdir.mkdir(parents=True, exist_ok=True)
        (pdir / "artifacts").mkdir(exist_ok=True)
        project = Project(id=pid, name=name or pid, description=description,
                          created=time.time())
        (pdir / "project.json").write_text(json.dumps(asdict(project), indent=2))
        if config is not None:
            (pdir / "config.json").write_text(json.dumps(config, indent=2))
        State(background="").save(pdir / "state.json")
        (pdir / "fragments.json").write_text(
            json.dumps(document_to_dict(ModelDocument()), indent=2))
        (pdir / "events.jsonl").write_text("")
        (pdir / "reviews.json").write_text("[]")
        (pdir / "notifications.json").write_text("[]")
        return project

    def meta(self, project_id: str) -> Project:
        doc = json.loads((self._dir(project_id) / "project.json").read_text())
        return Project(**doc)

    def save_meta(self, project: Project) -> None:
        (self._dir(project.id) / "project.json").write_text(
            json.dumps(asdict(project), indent=2))

    def load_state(self, project_id: str) -> State:
        return State.load(self._dir(project_id) / "state.json")

    def load_doc(self, project_id: str) -> ModelDocument:
        return document_from_dict(
            json.loads((self._dir(project_id) / "fragments.json").read_text()))

    def load_config(self, project_id: str, fallback: Optional[RunConfig] = None) -> RunConfig:
        path = self._dir(project_id) / "config.json"
        if path.exists():
            return RunConfig.from_file(path)
        if fallback is not None:
            return fallback
        raise SchemaViolation(str(path), "project has no config and no fallback was given")

    def reviews(self, project_id: str) -> list:
        docs = json.loads((self._dir(project_id) / "reviews.json").read_text())
        return [PendingReview(**d) for d in docs]

    def save_reviews(self, project_id: str, reviews) -> None:
        (self._dir(project_id) / "reviews.json").write_text(
            json.dumps([asdict(r) for r in reviews], indent=2))

    def notifications(self, project_id: str) -> list:
        return json.loads((self._dir(project_id) / "notifications.json").read_text())

    def append_notifications(self, project_id: str, advisories) -> None:
        current = self.notifications(project_id)
        current.extend(asdict(a) if isinstance(a, ProblemClassAdvisory) else a
                       for a in advisories)
        (self._dir(project_id) / "notifications.json").write_text(
            json.dumps(current, indent=2))

    def events_path(self, project_id: str) -> Path:
        return self._dir(project_id) / "events.jsonl"

    def pipeline(self, project_id: str, config: Optional[RunConfig] = None) -> Pipeline:
        """Materialize a pipeline over the stored state/doc with a shared log."""
        cfg = config or self.load_config(project_id)
        log = EventLog(path=self.events_path(project_id))
        pipeline = Pipeline(cfg, state=self.load_state(project_id),
                            doc=self.load_doc(project_id), log=log,
                            project_id=project_id)
        pipeline.corrector.reviews.extend(self.reviews(project_id))
        meta = self.meta(project_id)
        pipeline.description = meta.description
        return pipeline

    def persist(self, project_id: str, pipeline: Pipeline,
                outcome: Optional[SolveOutcome] = None) -> None:
        pdir = self._dir(project_id)
        pipeline.state.save(pdir / "state.json")
        (pdir / "fragments.json").write_text(
            json.dumps(document_to_dict(pipeline.doc), indent=2))
        self.save_reviews(project_id, pipeline.corrector.reviews)
        if pipeline.notifications:
            self.append_notifications(project_id, pipeline.notifications)
            pipeline.notifications.clear()
        if outcome is not None:
            meta = self.meta(project_id)
            meta.outcome = outcome.to_dict()
            self.save_meta(meta)
            self.write_artifact(project_id, "report",
                                json.dumps(outcome.to_dict(), indent=2), "json")

    def write_artifact(self, project_id: str, name: str, content: str, ext: str) -> dict:
        digest = hashlib.sha256(content.encode()).hexdigest()[:16]
        path = self._dir(project_id) / "artifacts" / f"{name}-{digest}.{ext}"
        if not path.exists():
            path.write_text(content)
        index_path = self._dir(project_id) / "artifacts" / "index.json"
        index = json.loads(index_path.read_text()) if index_path.exists() else {}
        index[name] = path.name
        index_path.write_text(json.dumps(index, indent=2))
        return {"name": name, "hash": digest, "file": path.name}

    def read_artifact(self, project_id: str, name: str) -> Optional[dict]:
        index_path = self._dir(project_id) / "artifacts" / "index.json"
        if name == "log":
            events = self.events_path(project_id)
            content = events.read_text() if events.exists() else ""
            return {"name": "log",
                    "hash": hashlib.sha256(content.encode()).hexdigest()[:16],
                    "content": content}
        if not index_path.exists():
            return None
        index = json.loads(index_path.read_text())
        if name not in index:
            return None
        path = self._dir(project_id) / "artifacts" / index[name]
        return {"name": name, "hash": path.stem.rsplit("-", 1)[-1],
                "content": path.read_text()}


STAGE_RUNNERS = {
    "ExtractParams": lambda p: p.extract_parameters(p.description),
    "ExtractClauses": lambda p: p.extract_clauses(),
    "Formulate": lambda p: p.formulate_all(),
    "Code": lambda p: p.code_all(),
    "Assemble": lambda p: p.assemble_and_solve(),
}


def run_stage(store: ProjectStore, project_id: str, stage: str,
              config: Optional[RunConfig] = None):
    """Execute one stage against the stored project, persisting on success.

    Returns the SolveOutcome for Assemble, else None. Raises StagePrecondition
    (and other MilpforgeError subclasses) without persisting partial work on
    precondition failures.
    """
    if stage not in STAGE_RUNNERS:
        raise SchemaViolation("$.stage", f"unknown stage '{stage}'; "
                              f"one of {sorted(STAGE_RUNNERS)}")
    pipeline = store.pipeline(project_id, config)
    result = STAGE_RUNNERS[stage](pipeline)
    outcome = result if isinstance(result, SolveOutcome) else None
    store.persist(project_id, pipeline, outcome)
    if stage == "Assemble":
        from .ir import ground
        from .lp_io import write_lp
        try:
            model = ground(pipeline.doc, pipeline.state)
            store.write_artifact(project_id, "lp", write_lp(model), "lp")
        except MilpforgeError:
            pass
    return outcome
