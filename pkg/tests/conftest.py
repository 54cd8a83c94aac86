import json
from pathlib import Path

import pytest

from logidroid.device import DeviceSession, SimulatedApp, SimulatorBackend
from logidroid.llm import LLMSession, ScriptedProvider, TranscriptLog
from logidroid.model import TestCase
from logidroid.store import HashingEmbedder, build_store

FIXTURES = Path(__file__).parent / "fixtures"
TODO_APP = FIXTURES / "todo_app.json"
GROUND_TRUTH = FIXTURES / "todo_ground_truth.json"
CORPUS = FIXTURES / "corpus"
GOLDEN_TRANSCRIPT = FIXTURES / "golden_transcript.json"
TRACE_TRANSCRIPT = FIXTURES / "trace_transcript.json"
TARGET_APP = "com.example.todo"
REQUIREMENT = "Test adding and removing a to-do item"


def load_case(path: Path) -> TestCase:
    return TestCase.from_dict(json.loads(path.read_text(encoding="utf-8")))


def scripted_session(entries, session_id="s", budget=None, log=None):
    provider = ScriptedProvider(entries)
    return LLMSession(provider, log or TranscriptLog(), session_id, budget=budget), provider


@pytest.fixture
def todo_app() -> SimulatedApp:
    return SimulatedApp.from_file(TODO_APP)


@pytest.fixture
def backend(todo_app) -> SimulatorBackend:
    return SimulatorBackend(todo_app)


@pytest.fixture
def device(backend) -> DeviceSession:
    return DeviceSession(backend, empty_retry_delay=0)


@pytest.fixture
def ground_truth() -> TestCase:
    return load_case(GROUND_TRUTH)


@pytest.fixture(scope="session")
def fixture_store(tmp_path_factory):
    out = tmp_path_factory.mktemp("store")
    build_store(CORPUS, out, HashingEmbedder())
    return out
