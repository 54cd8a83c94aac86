"""End-to-end run: retrieve -> fuse -> decision loop -> synthesize, with a run directory."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from . import __version__
from .decision import LoopReport, StepOutcome, run_decision_loop
from .device import DeviceSession, backend_from_spec, synthesize_case
from .device.session import EMPTY_RETRY_DELAY, DeviceBackend
from .errors import InvalidValue, LogiDroidError, PipelineError, UnknownCategory
from .fusion import fuse
from .llm import LLMSession, Provider, TranscriptLog, provider_from_spec
from .model import BusinessLogic, TestCase
from .store import KnowledgeStore, RetrievalResult, embedder_from_spec

logger = logging.getLogger(__name__)

FUSION_SESSION = "fusion"
DECISION_SESSION = "decision"


@dataclass
class RunConfig:
    requirement: str
    category: str
    store_dir: str | None = None
    exclude_app: str | None = None
    top_sim: int = 3
    step_num: int = 2
    attempt_limit: int = 3
    llm_spec: str | None = None
    embedder_spec: str | None = None
    backend_spec: str | None = None
    run_dir: str | None = None
    call_budget_multiplier: int = 10
    no_retrieval: bool = False
    app_id: str | None = None
    empty_retry_delay: float = EMPTY_RETRY_DELAY

    def __post_init__(self):
        for name in ("top_sim", "step_num", "attempt_limit", "call_budget_multiplier"):
            if getattr(self, name) < 1:
                raise InvalidValue(f"{name} must be at least 1")
        if not self.requirement.strip():
            raise InvalidValue("requirement is empty")
        if self.store_dir is None and not self.no_retrieval:
            raise InvalidValue("a knowledge store is required unless retrieval is disabled")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class RunStatus(str, Enum):
    PERFECT = "perfect"
    WITH_SKIPS = "completed_with_skips"
    ABORTED = "aborted"

    @property
    def exit_code(self) -> int:
        return {RunStatus.PERFECT: 0, RunStatus.WITH_SKIPS: 2, RunStatus.ABORTED: 1}[self]


@dataclass
class PipelineResult:
    case: TestCase
    status: RunStatus
    logic: BusinessLogic
    retrieved: list[RetrievalResult]
    report: LoopReport
    run_dir: Path | None
    history: Any = field(repr=False, default=None)

    @property
    def exit_code(self) -> int:
        return self.status.exit_code


def retrieve_for(config: RunConfig) -> list[RetrievalResult]:
    """Category-filtered retrieval, widening to every category for an unknown label."""
    embedder = embedder_from_spec(config.embedder_spec) if config.embedder_spec else None
    store = KnowledgeStore.load(config.store_dir, embedder)
    try:
        return store.retrieve(config.requirement, config.category, config.exclude_app, config.top_sim)
    except UnknownCategory:
        logger.warning("category %r is not in the store; searching all categories", config.category)
        return store.retrieve(config.requirement, None, config.exclude_app, config.top_sim)


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def run_pipeline(
    config: RunConfig, provider: Provider | None = None, backend: DeviceBackend | None = None
) -> PipelineResult:
    """Run both stages; module failures surface as PipelineError naming the phase."""
    run_dir = Path(config.run_dir) if config.run_dir else None
    if provider is None:
        if not config.llm_spec:
            raise PipelineError("setup", InvalidValue("no LLM provider configured"))
        provider = provider_from_spec(config.llm_spec)
    transcript_path = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        transcript_path = run_dir / "transcript.jsonl"
        transcript_path.write_text("", encoding="utf-8")
    log = TranscriptLog(transcript_path)
    meta: dict[str, Any] = {
        "version": __version__,
        "config": config.to_dict(),
        "provider_id": provider.provider_id,
        "provider_params": dict(getattr(provider, "params", {}) or {}),
        "randomness": None,
    }

    def finish(status: RunStatus, **extra: Any) -> None:
        meta.update(status=status.value, **extra)
        if run_dir is not None:
            _write_json(run_dir / "run.meta.json", meta)

    phase = "retrieval"
    try:
        retrieved: list[RetrievalResult] = [] if config.no_retrieval else retrieve_for(config)
        meta["retrieved"] = [
            {"app_id": r.entry.app_id, "category": r.entry.category, "summary": r.entry.summary, "score": r.score}
            for r in retrieved
        ]

        phase = "fusion"
        fusion_session = LLMSession(provider, log, FUSION_SESSION)
        logic = fuse(config.requirement, [r.entry.case for r in retrieved], config.category, fusion_session)
        if run_dir is not None:
            _write_json(run_dir / "logic.json", logic.to_dict())

        phase = "perception"
        if backend is None:
            if not config.backend_spec:
                raise InvalidValue("no device backend configured")
            backend = backend_from_spec(config.backend_spec)
        device = DeviceSession(backend, run_dir, empty_retry_delay=config.empty_retry_delay)
        device.perceive_with_retry()

        phase = "decision"
        decision_session = LLMSession(provider, log, DECISION_SESSION)
        result = run_decision_loop(
            config.requirement,
            logic,
            device,
            decision_session,
            step_num=config.step_num,
            attempt_limit=config.attempt_limit,
            budget_multiplier=config.call_budget_multiplier,
            trace_path=run_dir / "trace.jsonl" if run_dir is not None else None,
        )

        phase = "synthesis"
        app_id = config.app_id or backend.current_app()
        case = synthesize_case(result.history, app_id, config.category)
    except LogiDroidError as exc:
        report = getattr(exc, "report", None)
        finish(RunStatus.ABORTED, phase=phase, error=str(exc), report=report.to_dict() if report else None)
        raise PipelineError(phase, exc) from exc

    status = RunStatus.PERFECT if result.report.all_completed else RunStatus.WITH_SKIPS
    if run_dir is not None:
        _write_json(run_dir / "case.json", case.to_dict())
    finish(status, report=result.report.to_dict())
    return PipelineResult(case, status, logic, retrieved, result.report, run_dir, result.history)


__all__ = ["RunConfig", "RunStatus", "PipelineResult", "run_pipeline", "retrieve_for", "StepOutcome"]
