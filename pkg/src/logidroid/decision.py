"""Decision agent: sliding-window step selection, instruction generation and
completion judgment, driven in a perceive-decide-act loop over a device session.

Window bookkeeping: ``window_start`` always points at the first logic step that is
not yet consumed. Completing or skipping step ``j`` moves it to ``j + 1``; a
``(-1)`` selection consumes the first window step as *unmatched* and slides by one;
selecting a later window step consumes the ones before it as unmatched.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from .device.session import DeviceSession, SessionHistory, locate_in_history
from .errors import (
    ActionUnsupported,
    AssertionTargetUnresolved,
    LogiDroidError,
    ProviderUnavailable,
    ScriptExhausted,
    SessionAborted,
    StaleWidget,
    StepFailed,
    UnparseableReply,
)
from .fusion import ACTION_SYNONYMS, ParsedStep, parse_phrase
from .llm import LLMSession
from .model import (
    ActionKind,
    BusinessLogic,
    Condition,
    GuiState,
    Instruction,
    InstructionKind,
    LogicStep,
    StepKind,
)
from .prompts import PromptRole, render_prompt, with_feedback

logger = logging.getLogger(__name__)

NO_MATCH = -1
STEP_NUM = 2
ATTEMPT_LIMIT = 3
BUDGET_MULTIPLIER = 10


class StepOutcome(str, Enum):
    COMPLETED = "completed"
    SKIPPED = "skipped"
    UNMATCHED = "unmatched"


@dataclass
class DecisionState:
    window_start: int = 0
    window_size: int = STEP_NUM
    current_step: int | None = None
    is_completed: bool = True
    attempts: int = 0
    attempt_limit: int = ATTEMPT_LIMIT
    executed_cmds: list[tuple[int, Instruction]] = field(default_factory=list)

    def __post_init__(self):
        if self.window_size < 1 or self.attempt_limit < 1:
            raise ValueError("window_size and attempt_limit must be positive")

    def window(self, total: int) -> range:
        return range(self.window_start, min(self.window_start + self.window_size, total))

    def for_step(self, index: int) -> list[Instruction]:
        return [instr for i, instr in self.executed_cmds if i == index]


def step_line(step: LogicStep) -> str:
    return f"({'Event' if step.kind is StepKind.EVENT else 'Assertion'}) {step.phrase}"


# step selection

_SELECTION = re.compile(r"\(\s*(-1)\s*\)|(-?\d+)")


def parse_selection(reply: str, window_size: int) -> int:
    m = _SELECTION.search(reply or "")
    if m:
        value = int(m.group(1) or m.group(2))
        if value == NO_MATCH or 0 <= value < window_size:
            return value
    raise UnparseableReply(PromptRole.STEP_SELECTION.value, reply)


def select_step(requirement: str, state_description: str, window_steps: Sequence[str], session: LLMSession) -> int:
    """Index into ``window_steps`` or NO_MATCH; one corrective round before giving up."""
    if not window_steps:
        raise ValueError("empty window")
    base = render_prompt(
        PromptRole.STEP_SELECTION,
        {"requirement": requirement, "window_steps": list(window_steps), "state_description": state_description},
    )
    reply = session.ask(PromptRole.STEP_SELECTION, base)
    try:
        return parse_selection(reply, len(window_steps))
    except UnparseableReply:
        problem = f"Answer with a single candidate number between 0 and {len(window_steps) - 1}, or (-1)."
        reply = session.ask(PromptRole.STEP_SELECTION, with_feedback(base, reply, [problem]))
        return parse_selection(reply, len(window_steps))


# instruction generation


def _extract_json(reply: str) -> dict[str, Any]:
    start, end = reply.find("{"), reply.rfind("}")
    if start < 0 or end < start:
        raise ValueError("no JSON object in reply")
    data = json.loads(reply[start : end + 1])
    if not isinstance(data, dict):
        raise ValueError("reply is not a JSON object")
    return data


def _parse_action(value: Any) -> ActionKind:
    text = " ".join(str(value).replace("_", " ").lower().split())
    if text in ACTION_SYNONYMS:
        return ACTION_SYNONYMS[text]
    if text == "back":
        return ActionKind.BACK
    return ActionKind(str(value).lower())


def parse_instruction(reply: str, parsed: ParsedStep, state: GuiState) -> Instruction:
    """Turn a JSON reply into an Instruction valid for ``state``; raises ValueError with the reason."""
    try:
        data = _extract_json(reply)
    except ValueError as exc:
        raise ValueError(f"unreadable reply: {exc}") from exc
    raw_id = data.get("widget_id")
    widget_id = None
    if raw_id is not None and str(raw_id).strip() != "":
        try:
            widget_id = int(raw_id)
        except (TypeError, ValueError):
            raise ValueError(f"widget_id {raw_id!r} is not an integer") from None
    if parsed.kind is StepKind.ASSERTION:
        if widget_id is None or not 0 <= widget_id < len(state.widgets):
            raise ValueError(f"widget_id {raw_id!r} is not listed in the current state")
        return Instruction(InstructionKind.ASSERTION, widget_id, condition=parsed.condition, source_state_id=state.state_id)
    try:
        action = _parse_action(data.get("action"))
    except ValueError:
        raise ValueError(f"unknown operation {data.get('action')!r}") from None
    if action is ActionKind.BACK:
        return Instruction(InstructionKind.EVENT, None, ActionKind.BACK, source_state_id=state.state_id)
    if widget_id is None or not 0 <= widget_id < len(state.widgets):
        raise ValueError(f"widget_id {raw_id!r} is not listed in the current state")
    widget = state.widget(widget_id)
    if action not in widget.supported_ops:
        raise ValueError(f"widget {widget_id} does not support {action.value}")
    value = data.get("value")
    if action is ActionKind.EDIT:
        if value is None or str(value) == "":
            raise ValueError("edit needs a value")
        value = str(value)
    else:
        value = None
    return Instruction(InstructionKind.EVENT, widget_id, action, value, source_state_id=state.state_id)


def generate_instruction(
    requirement: str,
    logic_step: LogicStep,
    state: GuiState,
    executed_cmds: Sequence[str],
    history: SessionHistory,
    session: LLMSession,
) -> Instruction:
    parsed = parse_phrase(logic_step.phrase)
    if parsed.kind is StepKind.ASSERTION and parsed.condition is Condition.NOT_EXISTS:
        # the target is gone from the current screen: find it in earlier states
        state_id, widget_id, _ = locate_in_history(parsed.widget, history)
        return Instruction(InstructionKind.ASSERTION, widget_id, condition=Condition.NOT_EXISTS, source_state_id=state_id)
    base = render_prompt(
        PromptRole.INSTRUCTION_GENERATION,
        {
            "requirement": requirement,
            "logic_step": step_line(logic_step),
            "state_description": state.description,
            "executed": list(executed_cmds),
            "step_kind": parsed.kind.value,
        },
    )
    reply = session.ask(PromptRole.INSTRUCTION_GENERATION, base)
    try:
        return parse_instruction(reply, parsed, state)
    except ValueError as first:
        reply = session.ask(PromptRole.INSTRUCTION_GENERATION, with_feedback(base, reply, [str(first)]))
        try:
            return parse_instruction(reply, parsed, state)
        except ValueError as second:
            raise StepFailed(f"no valid instruction for {logic_step.phrase!r}: {second}") from second


# completion judgment

_VERDICT = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


def parse_verdict(reply: str) -> bool:
    m = _VERDICT.match(reply or "")
    if not m:
        raise UnparseableReply(PromptRole.COMPLETION_JUDGMENT.value, reply)
    return m.group(1).lower() == "yes"


def judge_completion(
    requirement: str, logic_step: LogicStep, executed_for_step: Sequence[str], latest: GuiState, session: LLMSession
) -> bool:
    """Yes/No verdict; an unreadable answer gets one feedback round, then counts as No."""
    base = render_prompt(
        PromptRole.COMPLETION_JUDGMENT,
        {
            "requirement": requirement,
            "logic_step": step_line(logic_step),
            "executed": list(executed_for_step),
            "state_description": latest.description,
        },
    )
    reply = session.ask(PromptRole.COMPLETION_JUDGMENT, base)
    try:
        return parse_verdict(reply)
    except UnparseableReply:
        reply = session.ask(PromptRole.COMPLETION_JUDGMENT, with_feedback(base, reply, ['Answer "Yes" or "No" only.']))
        try:
            return parse_verdict(reply)
        except UnparseableReply:
            return False


# the loop


def describe_cmd(instr: Instruction, history: SessionHistory) -> str:
    if instr.action is ActionKind.BACK:
        return "press back"
    try:
        name = history.state(instr.source_state_id).widget(instr.widget_id).pattern.display_name()
    except (KeyError, StaleWidget):
        name = "?"
    if instr.kind is InstructionKind.ASSERTION:
        where = "in the state" if instr.condition is Condition.EXISTS else "not in the state"
        return f'assert widget "{name}" {where}'
    text = f'{instr.action.value} widget {instr.widget_id} "{name}"'
    return text + (f' with "{instr.value}"' if instr.value is not None else "")


@dataclass
class LoopReport:
    outcomes: list[StepOutcome | None]
    trace: list[dict[str, Any]]
    calls: int
    task_complete: bool = False
    abort_reason: str | None = None

    @property
    def all_completed(self) -> bool:
        return self.task_complete and all(o is StepOutcome.COMPLETED for o in self.outcomes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcomes": [o.value if o else None for o in self.outcomes],
            "calls": self.calls,
            "task_complete": self.task_complete,
            "abort_reason": self.abort_reason,
        }


@dataclass
class LoopResult:
    history: SessionHistory
    report: LoopReport
    state: DecisionState


class _TraceWriter:
    def __init__(self, path: str | Path | None):
        self.records: list[dict[str, Any]] = []
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def emit(self, record: dict[str, Any]) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_decision_loop(
    requirement: str,
    logic: BusinessLogic,
    device: DeviceSession,
    session: LLMSession,
    step_num: int = STEP_NUM,
    attempt_limit: int = ATTEMPT_LIMIT,
    budget_multiplier: int = BUDGET_MULTIPLIER,
    trace_path: str | Path | None = None,
) -> LoopResult:
    """Drive the device until every logic step is consumed.

    Raises SessionAborted (carrying history and report) on device failure, provider
    failure or when the provider-call budget is spent.
    """
    steps = list(logic.steps)
    n = len(steps)
    ds = DecisionState(window_size=step_num, attempt_limit=attempt_limit)
    outcomes: list[StepOutcome | None] = [None] * n
    trace = _TraceWriter(trace_path)
    start_calls = session.calls
    session.budget = start_calls + budget_multiplier * n
    report = LoopReport(outcomes, trace.records, 0)
    iteration = 0

    def abort(reason: str, cause: BaseException):
        report.calls = session.calls - start_calls
        report.abort_reason = reason
        raise SessionAborted(reason, history=device.history, report=report) from cause

    def record(**fields: Any) -> None:
        nonlocal iteration
        rec = {
            "iteration": iteration,
            "window": [ds.window_start, ds.window(n).stop],
            "selection": None,
            "step": None,
            "instruction": None,
            "judgment": None,
            "attempts": ds.attempts,
            "outcome": None,
            "unmatched": [],
            "state_id": None,
            "error": None,
        }
        rec.update(fields)
        trace.emit(rec)
        iteration += 1

    def consume(index: int, outcome: StepOutcome) -> None:
        outcomes[index] = outcome
        ds.window_start = index + 1
        ds.current_step = None
        ds.is_completed = True
        ds.attempts = 0

    try:
        state = None
        if n:
            state = device.current if len(device.history) else device.perceive_with_retry()
        while ds.window_start < n:
            window = ds.window(n)
            rec_window = [window.start, window.stop]
            selection = None
            passed: list[int] = []
            if ds.is_completed:
                lines = [step_line(steps[i]) for i in window]
                try:
                    selection = select_step(requirement, state.description, lines, session)
                except UnparseableReply:
                    selection = NO_MATCH
                if selection == NO_MATCH:
                    outcomes[ds.window_start] = StepOutcome.UNMATCHED
                    unmatched = [ds.window_start]
                    ds.window_start += 1
                    record(window=rec_window, selection=NO_MATCH, unmatched=unmatched, state_id=state.state_id)
                    continue
                ds.current_step = window.start + selection
                passed = list(range(window.start, ds.current_step))
                for i in passed:
                    outcomes[i] = StepOutcome.UNMATCHED
                ds.window_start = ds.current_step
                ds.is_completed = False
                ds.attempts = 0
            index = ds.current_step
            logic_step = steps[index]
            decided_in = state.state_id
            executed = [f"step {i + 1}: {describe_cmd(c, device.history)}" for i, c in ds.executed_cmds]
            try:
                instruction = generate_instruction(requirement, logic_step, state, executed, device.history, session)
                if instruction.kind is InstructionKind.EVENT:
                    device.execute(instruction, index)
                else:
                    device.check(instruction, index)
            except (StepFailed, AssertionTargetUnresolved, ActionUnsupported) as exc:
                ds.attempts += 1
                attempts, outcome = ds.attempts, None
                if ds.attempts >= ds.attempt_limit:
                    consume(index, StepOutcome.SKIPPED)
                    outcome = StepOutcome.SKIPPED.value
                record(
                    window=rec_window, selection=selection, step=index, attempts=attempts,
                    outcome=outcome, unmatched=passed, state_id=decided_in, error=type(exc).__name__,
                )
                continue
            ds.executed_cmds.append((index, instruction))
            state = device.perceive_with_retry()
            done = judge_completion(
                requirement,
                logic_step,
                [describe_cmd(c, device.history) for c in ds.for_step(index)],
                state,
                session,
            )
            if not done:
                ds.attempts += 1
            attempts, outcome = ds.attempts, None
            if done:
                consume(index, StepOutcome.COMPLETED)
                outcome = StepOutcome.COMPLETED.value
            elif ds.attempts >= ds.attempt_limit:
                consume(index, StepOutcome.SKIPPED)
                outcome = StepOutcome.SKIPPED.value
            record(
                window=rec_window, selection=selection, step=index, instruction=instruction.to_dict(),
                judgment="yes" if done else "no", attempts=attempts, outcome=outcome,
                unmatched=passed, state_id=decided_in,
            )
    except SessionAborted as exc:
        abort(exc.reason, exc)
    except (ScriptExhausted, ProviderUnavailable) as exc:
        abort(f"provider failure: {exc}", exc)
    except LogiDroidError as exc:
        abort(f"device failure: {type(exc).__name__}: {exc}", exc)

    report.task_complete = True
    report.calls = session.calls - start_calls
    record(
        window=[ds.window_start, ds.window_start],
        instruction=Instruction(InstructionKind.TASK_COMPLETE).to_dict(),
        state_id=state.state_id if state is not None else None,
    )
    return LoopResult(device.history, report, ds)
