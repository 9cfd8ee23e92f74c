import json
from pathlib import Path

import pytest

from milpforge.ir import ModelDocument
from milpforge.llm import AuthoredBackend, BackendSpec
from milpforge.pipeline import EventLog, Pipeline, RunConfig
from milpforge.state import State

DATA = Path(__file__).parent.parent / "src" / "milpforge" / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def make_config(**overrides) -> RunConfig:
    spec = BackendSpec(kind="scripted", transcript="placeholder.json")
    return RunConfig(backend=spec, **overrides)


def make_pipeline(handlers, default=None, **config_overrides):
    """Pipeline wired to an in-process authored backend."""
    backend = AuthoredBackend(handlers, default=default)
    config = make_config(**config_overrides)
    log = EventLog()
    pipeline = Pipeline(config, state=State(), doc=ModelDocument(), log=log,
                        backend=backend)
    return pipeline


def load_json(path):
    return json.loads(Path(path).read_text())


def ok_handlers():
    """Handlers that answer every audit/structure query with a no-op."""
    return {
        "reflect_item": lambda b: {"verdict": "ok", "confidence": 5},
        "reflect_collection": lambda b: {"verdict": "ok", "confidence": 5},
        "structure_detect": lambda b: {"applicable": False, "proposals": [],
                                       "confidence": 5},
        "classify_problem": lambda b: {"detected": "None", "rationale": "",
                                       "confidence": 5},
    }
