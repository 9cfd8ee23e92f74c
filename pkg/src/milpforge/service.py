"""HTTP service for the human-in-the-loop UI: project CRUD, async stage runs,
review queue, direct item edits, notifications, and artifacts.

Mutations are serialized per project (second writer gets 409) and every one of
them goes through the same feedback semantics the pipeline uses, so statuses
reset exactly as they would in-process.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from .correction import FeedbackDecision
from .errors import (
    InvalidPayload,
    MilpforgeError,
    SchemaViolation,
    StagePrecondition,
    UnknownTarget,
)
from .pipeline import RunConfig, SolveOutcome, derive_stage
from .projects import STAGE_RUNNERS, ProjectStore, run_stage


class CreateProject(BaseModel):
    description: str
    name: str = ""
    config: Optional[dict] = None


class ReviewAction(BaseModel):
    action: str  # keep | remove | modify
    payload: Optional[dict] = None


class ItemPatch(BaseModel):
    payload: dict


@dataclass
class RunRecord:
    id: str
    project: str
    stage: str
    status: str = "queued"  # queued | running | done | failed
    error: str = ""
    outcome: Optional[dict] = None
    created: float = field(default_factory=time.time)
    finished: Optional[float] = None

    def to_dict(self) -> dict:
        return {"id": self.id, "project": self.project, "stage": self.stage,
                "status": self.status, "error": self.error, "outcome": self.outcome,
                "created": self.created, "finished": self.finished}


def create_app(root, default_config: Optional[RunConfig] = None,
               auth_token: Optional[str] = None, workers: int = 4) -> FastAPI:
    store = ProjectStore(root)
    app = FastAPI(title="milpforge service")
    runs: dict = {}
    runs_lock = threading.Lock()
    project_locks: dict = {}
    project_locks_guard = threading.Lock()
    pool = ThreadPoolExecutor(max_workers=workers)

    def project_lock(pid: str) -> threading.Lock:
        with project_locks_guard:
            return project_locks.setdefault(pid, threading.Lock())

    async def check_auth(request: Request):
        if auth_token and request.headers.get("X-Auth-Token") != auth_token:
            raise HTTPException(status_code=401, detail="missing or bad auth token")

    def require_project(pid: str):
        if not store.exists(pid):
            raise HTTPException(status_code=404, detail=f"unknown project '{pid}'")

    @app.exception_handler(MilpforgeError)
    async def engine_error(_, exc: MilpforgeError):
        if isinstance(exc, StagePrecondition):
            return JSONResponse(status_code=409, content={"error": "stage-precondition",
                                                          "message": str(exc)})
        if isinstance(exc, (SchemaViolation, InvalidPayload)):
            return JSONResponse(status_code=422, content={"error": type(exc).__name__,
                                                          "message": str(exc)})
        if isinstance(exc, UnknownTarget):
            return JSONResponse(status_code=404, content={"error": "unknown-target",
                                                          "message": str(exc)})
        return JSONResponse(status_code=500, content={"error": type(exc).__name__,
                                                      "message": str(exc)})

    @app.post("/projects", dependencies=[Depends(check_auth)])
    def create_project(body: CreateProject):
        project = store.create(body.description, name=body.name, config=body.config)
        return {"id": project.id, "name": project.name}

    @app.get("/projects", dependencies=[Depends(check_auth)])
    def list_projects():
        return store.list_projects()

    @app.get("/projects/{pid}/state", dependencies=[Depends(check_auth)])
    def get_state(pid: str):
        require_project(pid)
        state = store.load_state(pid)
        return {"state": state.to_dict(), "stage": derive_stage(state).value,
                "outcome": store.meta(pid).outcome}

    @app.post("/projects/{pid}/stages/{stage}/run", dependencies=[Depends(check_auth)])
    def start_stage(pid: str, stage: str):
        require_project(pid)
        if stage not in STAGE_RUNNERS:
            raise HTTPException(status_code=422, detail=f"unknown stage '{stage}'")
        lock = project_lock(pid)
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="another run holds this project")
        try:
            # fail fast on stage preconditions before queueing
            state = store.load_state(pid)
            expected = derive_stage(state).value
            if expected != stage:
                raise HTTPException(status_code=409,
                                    detail=f"stage precondition: expected {expected}")
            rid = uuid.uuid4().hex[:12]
            record = RunRecord(id=rid, project=pid, stage=stage)
            with runs_lock:
                runs[rid] = record

            def execute():
                record.status = "running"
                try:
                    config = store.load_config(pid, fallback=default_config)
                    outcome = run_stage(store, pid, stage, config)
                    record.outcome = outcome.to_dict() if outcome is not None else None
                    record.status = "done"
                except MilpforgeError as exc:
                    record.status = "failed"
                    record.error = str(exc)
                except Exception as exc:  # present unexpected bugs in the record
                    record.status = "failed"
                    record.error = f"{type(exc).__name__}: {exc}"
                finally:
                    record.finished = time.time()
                    lock.release()

            pool.submit(execute)
        except HTTPException:
            lock.release()
            raise
        return {"run_id": rid}

    @app.get("/runs/{rid}", dependencies=[Depends(check_auth)])
    def get_run(rid: str):
        with runs_lock:
            record = runs.get(rid)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown run '{rid}'")
        return record.to_dict()

    @app.get("/runs/{rid}/events", dependencies=[Depends(check_auth)])
    def stream_run_events(rid: str):
        with runs_lock:
            record = runs.get(rid)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown run '{rid}'")
        events_path = store.events_path(record.project)

        def generate():
            offset = 0
            while True:
                text = events_path.read_text() if events_path.exists() else ""
                if len(text) > offset:
                    yield text[offset:]
                    offset = len(text)
                if record.status in ("done", "failed"):
                    yield json.dumps({"kind": "run", "outcome": record.status}) + "\n"
                    return
                time.sleep(0.05)

        return StreamingResponse(generate(), media_type="application/jsonl")

    @app.get("/projects/{pid}/reviews", dependencies=[Depends(check_auth)])
    def list_reviews(pid: str):
        require_project(pid)
        from dataclasses import asdict

        return [asdict(r) for r in store.reviews(pid) if not r.resolved]

    @app.post("/projects/{pid}/reviews/{review_id}", dependencies=[Depends(check_auth)])
    def resolve_review(pid: str, review_id: str, body: ReviewAction):
        require_project(pid)
        lock = project_lock(pid)
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="another run holds this project")
        try:
            reviews = store.reviews(pid)
            match = next((r for r in reviews if r.id == review_id), None)
            if match is None:
                raise HTTPException(status_code=404, detail=f"unknown review '{review_id}'")
            pipeline = store.pipeline(pid, store.load_config(pid, fallback=default_config))
            decision = FeedbackDecision(target_id=match.item_id, action=body.action,
                                        payload=body.payload, author="Human")
            pipeline.corrector.apply_feedback(pipeline.state, decision, pipeline.doc)
            match.resolved = True
            match.decision = {"action": body.action, "payload": body.payload}
            pipeline.corrector.reviews = [
                r if r.id != review_id else match for r in pipeline.corrector.reviews
            ]
            store.persist(pid, pipeline)
            return {"resolved": review_id, "action": body.action}
        finally:
            lock.release()

    @app.patch("/projects/{pid}/items/{item_id}", dependencies=[Depends(check_auth)])
    def patch_item(pid: str, item_id: str, body: ItemPatch):
        require_project(pid)
        lock = project_lock(pid)
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="another run holds this project")
        try:
            pipeline = store.pipeline(pid, store.load_config(pid, fallback=default_config))
            decision = FeedbackDecision(target_id=item_id, action="modify",
                                        payload=body.payload, author="Human")
            pipeline.corrector.apply_feedback(pipeline.state, decision, pipeline.doc)
            store.persist(pid, pipeline)
            return {"modified": item_id,
                    "state": pipeline.state.to_dict(),
                    "stage": derive_stage(pipeline.state).value}
        finally:
            lock.release()

    @app.get("/projects/{pid}/notifications", dependencies=[Depends(check_auth)])
    def list_notifications(pid: str):
        require_project(pid)
        return store.notifications(pid)

    @app.get("/projects/{pid}/artifacts/{name}", dependencies=[Depends(check_auth)])
    def get_artifact(pid: str, name: str):
        require_project(pid)
        if name not in ("lp", "report", "log"):
            raise HTTPException(status_code=422, detail="artifact must be lp, report, or log")
        artifact = store.read_artifact(pid, name)
        if artifact is None:
            raise HTTPException(status_code=404, detail=f"artifact '{name}' not generated yet")
        return artifact

    @app.get("/projects/{pid}/events", dependencies=[Depends(check_auth)])
    def get_events(pid: str):
        require_project(pid)
        path = store.events_path(pid)
        return PlainTextResponse(path.read_text() if path.exists() else "",
                                 media_type="application/jsonl")

    app.state.store = store
    app.state.runs = runs
    return app


def serve(root, config_path=None, host="127.0.0.1", port=8000, auth_token=None):
    import uvicorn

    config = RunConfig.from_file(config_path) if config_path else None
    app = create_app(root, default_config=config, auth_token=auth_token)
    uvicorn.run(app, host=host, port=port, log_level="warning")
