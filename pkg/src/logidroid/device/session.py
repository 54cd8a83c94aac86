"""Perception, action execution, state history, assertions and case synthesis."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Protocol, Sequence

from ..errors import (
    ActionUnsupported,
    AssertionTargetUnresolved,
    EmptyScreen,
    EmptySession,
    InvalidValue,
    StaleWidget,
    StepFailed,
)
from ..model import (
    ActionKind,
    Condition,
    GuiState,
    Instruction,
    InstructionKind,
    StepKind,
    TestCase,
    TestStep,
    WidgetDescriptor,
    WidgetPattern,
    spatial_sort_key,
)
from ..fusion import widget_alternatives
from .hierarchy import Dump, RawWidget

logger = logging.getLogger(__name__)

EMPTY_RETRY_DELAY = 1.0
SWIPE_FROM, SWIPE_TO = 0.2, 0.8


class DeviceBackend(Protocol):
    settle_seconds: float

    def dump_hierarchy(self) -> Dump: ...

    def screenshot(self) -> bytes | None: ...

    def perform(
        self,
        action: ActionKind,
        target: RawWidget | None,
        text: str | None = None,
        start: tuple[int, int] | None = None,
        end: tuple[int, int] | None = None,
    ) -> None: ...

    def current_app(self) -> str: ...


def describe_widget(widget_id: int, w: WidgetDescriptor) -> str:
    ops = ", ".join(op.value for op in ActionKind if op in w.supported_ops)
    flat = lambda s: " ".join(s.split())  # noqa: E731
    return (
        f"widget {widget_id}: text='{flat(w.text)}' content-desc='{flat(w.content_desc)}' "
        f"resource-id='{flat(w.resource_id)}' ops=[{ops}]"
    )


def describe_state(state: GuiState) -> str:
    return "\n".join(describe_widget(i, w) for i, w in state.widgets)


def order_widgets(raw: Sequence[RawWidget]) -> list[RawWidget]:
    """Keep nameable widgets and sort them top-left to bottom-right."""
    kept = [(i, w) for i, w in enumerate(raw) if w.describable]
    kept.sort(key=lambda iw: spatial_sort_key(iw[1].bounds, iw[0]))
    return [w for _, w in kept]


def to_descriptor(w: RawWidget) -> WidgetDescriptor:
    return WidgetDescriptor(w.text, w.content_desc, w.resource_id, w.ops, w.bounds)


def build_state(state_id: int, raw: Sequence[RawWidget], screenshot_ref: str | None = None) -> GuiState:
    ordered = order_widgets(raw)
    if not ordered:
        raise EmptyScreen("no widget carries text, content-desc or resource-id")
    state = GuiState(state_id, tuple((i, to_descriptor(w)) for i, w in enumerate(ordered)), "", screenshot_ref)
    return GuiState(state.state_id, state.widgets, describe_state(state), screenshot_ref)


def swipe_points(bounds, action: ActionKind) -> tuple[tuple[int, int], tuple[int, int]]:
    """Drag from 20% to 80% of the widget along the swipe axis, through its centre."""
    cx, cy = bounds.center
    at = lambda lo, size, frac: lo + round(size * frac)  # noqa: E731
    x_lo, x_hi = at(bounds.left, bounds.width, SWIPE_FROM), at(bounds.left, bounds.width, SWIPE_TO)
    y_lo, y_hi = at(bounds.top, bounds.height, SWIPE_FROM), at(bounds.top, bounds.height, SWIPE_TO)
    if action is ActionKind.SWIPE_RIGHT:
        return (x_lo, cy), (x_hi, cy)
    if action is ActionKind.SWIPE_LEFT:
        return (x_hi, cy), (x_lo, cy)
    if action is ActionKind.SWIPE_DOWN:
        return (cx, y_lo), (cx, y_hi)
    if action is ActionKind.SWIPE_UP:
        return (cx, y_hi), (cx, y_lo)
    raise ValueError(f"{action.value} is not a swipe")


@dataclass
class HistoryEntry:
    state: GuiState
    instruction: Instruction | None = None
    descriptor: WidgetDescriptor | None = None
    verdict: bool | None = None
    logic_index: int | None = None


class SessionHistory:
    """Append-only sequence of perceived states and the instruction executed in each."""

    def __init__(self):
        self._entries: list[HistoryEntry] = []
        self._by_id: dict[int, GuiState] = {}

    def append(self, state: GuiState) -> HistoryEntry:
        if self._entries and state.state_id <= self._entries[-1].state.state_id:
            raise InvalidValue("state ids must strictly increase")
        entry = HistoryEntry(state)
        self._entries.append(entry)
        self._by_id[state.state_id] = state
        return entry

    @property
    def latest(self) -> HistoryEntry:
        if not self._entries:
            raise EmptySession("no state has been perceived")
        return self._entries[-1]

    def state(self, state_id: int) -> GuiState:
        try:
            return self._by_id[state_id]
        except KeyError:
            raise StaleWidget(f"state {state_id} is not in the history") from None

    def __iter__(self) -> Iterator[HistoryEntry]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> HistoryEntry:
        return self._entries[i]


def _target_matcher(target) -> Callable[[WidgetDescriptor], bool]:
    if isinstance(target, WidgetDescriptor):
        target = target.pattern
    if isinstance(target, WidgetPattern):
        return lambda w: w.pattern.shares_attribute(target)
    if isinstance(target, str):
        names = widget_alternatives(target)
    else:
        names = list(target)
    return lambda w: any(w.pattern.matches_phrase(n) for n in names)


def locate_in_history(target, history: SessionHistory) -> tuple[int, int, WidgetDescriptor]:
    """``(state_id, widget_id, descriptor)`` of the newest earlier state holding ``target``."""
    matches = _target_matcher(target)
    entries = list(history)[:-1]  # the current state is never searched
    for entry in reversed(entries):
        for wid, w in entry.state.widgets:
            if matches(w):
                return entry.state.state_id, wid, w
    raise AssertionTargetUnresolved(f"{target!r} appears in no earlier state")


def backtrack_widget(target, history: SessionHistory) -> WidgetDescriptor:
    return locate_in_history(target, history)[2]


def present(descriptor: WidgetDescriptor | WidgetPattern, state: GuiState) -> bool:
    pattern = descriptor.pattern if isinstance(descriptor, WidgetDescriptor) else descriptor
    return any(w.pattern.shares_attribute(pattern) for _, w in state.widgets)


def assertion_target(instruction: Instruction, history: SessionHistory) -> WidgetDescriptor:
    if instruction.source_state_id is None:
        raise AssertionTargetUnresolved("assertion has no source state")
    try:
        return history.state(instruction.source_state_id).widget(instruction.widget_id)
    except (KeyError, StaleWidget) as exc:
        raise AssertionTargetUnresolved(f"cannot resolve widget {instruction.widget_id}: {exc}") from exc


def check_assertion(instruction: Instruction, current: GuiState, history: SessionHistory) -> bool:
    if instruction.kind is not InstructionKind.ASSERTION:
        raise InvalidValue("check_assertion needs an assertion instruction")
    found = present(assertion_target(instruction, history), current)
    return found if instruction.condition is Condition.EXISTS else not found


class DeviceSession:
    """Owns one backend: perceive, act, verify, remember."""

    def __init__(
        self,
        backend: DeviceBackend,
        run_dir: str | Path | None = None,
        empty_retry_delay: float = EMPTY_RETRY_DELAY,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.empty_retry_delay = empty_retry_delay
        self.sleep = sleep
        self.history = SessionHistory()
        self._next_id = 0
        self._raw: dict[int, tuple[RawWidget, ...]] = {}

    def perceive(self) -> GuiState:
        dump = self.backend.dump_hierarchy()
        state_id = self._next_id
        screenshot_ref = None
        state = build_state(state_id, dump.widgets)
        if self.run_dir is not None:
            states = self.run_dir / "states"
            states.mkdir(parents=True, exist_ok=True)
            (states / f"{state_id}.xml").write_text(dump.raw, encoding="utf-8")
            shot = self.backend.screenshot()
            if shot:
                path = states / f"{state_id}.png"
                path.write_bytes(shot)
                screenshot_ref = str(path)
                state = GuiState(state.state_id, state.widgets, state.description, screenshot_ref)
        self._next_id += 1
        self._raw[state_id] = tuple(order_widgets(dump.widgets))
        self.history.append(state)
        return state

    def perceive_with_retry(self) -> GuiState:
        try:
            return self.perceive()
        except EmptyScreen:
            logger.info("empty screen, retrying after %.1fs", self.empty_retry_delay)
            self.sleep(self.empty_retry_delay)
            return self.perceive()

    @property
    def current(self) -> GuiState:
        return self.history.latest.state

    def _claim_latest(self) -> HistoryEntry:
        entry = self.history.latest
        if entry.instruction is not None:
            raise StaleWidget(f"state {entry.state.state_id} already has an instruction; perceive first")
        return entry

    def execute(self, instruction: Instruction, logic_index: int | None = None) -> None:
        if instruction.kind is not InstructionKind.EVENT:
            raise InvalidValue("only event instructions are executed")
        entry = self._claim_latest()
        state = entry.state
        if instruction.action is ActionKind.BACK and instruction.widget_id is None:
            self.backend.perform(ActionKind.BACK, None)
            descriptor = None
        else:
            if instruction.source_state_id != state.state_id:
                raise StaleWidget(
                    f"instruction targets state {instruction.source_state_id}, latest is {state.state_id}"
                )
            try:
                descriptor = state.widget(instruction.widget_id)
            except KeyError:
                raise StaleWidget(f"state {state.state_id} has no widget {instruction.widget_id}") from None
            action = instruction.action
            if action is not ActionKind.BACK and action not in descriptor.supported_ops:
                raise ActionUnsupported(f"widget {instruction.widget_id} does not support {action.value}")
            raw = self._raw[state.state_id][instruction.widget_id]
            start = end = None
            if action.is_swipe:
                start, end = swipe_points(descriptor.bounds, action)
            elif action is not ActionKind.BACK:
                start = descriptor.bounds.center
            self.backend.perform(action, raw, instruction.value, start, end)
        entry.instruction, entry.descriptor, entry.logic_index = instruction, descriptor, logic_index
        if self.backend.settle_seconds:
            self.sleep(self.backend.settle_seconds)

    def check(self, instruction: Instruction, logic_index: int | None = None) -> bool:
        entry = self._claim_latest()
        verdict = check_assertion(instruction, entry.state, self.history)
        entry.instruction = instruction
        entry.descriptor = assertion_target(instruction, self.history)
        entry.verdict = verdict
        entry.logic_index = logic_index
        return verdict


def synthesize_case(history: SessionHistory, app_id: str, category: str) -> TestCase:
    """One step per executed event and per checked assertion, in execution order."""
    steps: list[TestStep] = []
    for entry in history:
        instr = entry.instruction
        if instr is None or entry.descriptor is None:
            continue
        pattern = entry.descriptor.pattern
        if instr.kind is InstructionKind.EVENT and instr.action is not ActionKind.BACK:
            value = instr.value if instr.action is ActionKind.EDIT else None
            steps.append(TestStep.event(instr.action, pattern, value))
        elif instr.kind is InstructionKind.ASSERTION:
            steps.append(TestStep.assertion(instr.condition, pattern))
    if not steps:
        raise EmptySession("the session executed no events or assertions")
    return TestCase(app_id, category, tuple(steps))


def assertion_verdicts(history: SessionHistory) -> list[bool]:
    return [e.verdict for e in history if e.instruction is not None and e.instruction.kind is InstructionKind.ASSERTION]


def best_match(pattern: WidgetPattern, state: GuiState) -> int | None:
    """Widget sharing the most canonical attributes with ``pattern`` (first on ties)."""
    want = pattern.canonical()
    best, best_score = None, 0
    for wid, w in state.widgets:
        have = w.pattern.canonical()
        score = sum(
            1 for a in ("text", "content_desc", "resource_id") if getattr(want, a) and getattr(want, a) == getattr(have, a)
        )
        if score > best_score:
            best, best_score = wid, score
    return best


def replay_case(case: TestCase, backend: DeviceBackend, **session_kwargs) -> list[bool]:
    """Run ``case`` step by step on ``backend``; returns the assertion verdicts in order."""
    session = DeviceSession(backend, **session_kwargs)
    verdicts: list[bool] = []
    for n, step in enumerate(case.steps):
        state = session.perceive_with_retry()
        if step.kind is StepKind.EVENT:
            if step.action is ActionKind.BACK:
                session.execute(Instruction(InstructionKind.EVENT, None, ActionKind.BACK))
                continue
            wid = best_match(step.widget, state)
            if wid is None:
                raise StepFailed(f"step {n}: no widget matches {step.widget.display_name()!r}")
            session.execute(
                Instruction(InstructionKind.EVENT, wid, step.action, step.value, source_state_id=state.state_id)
            )
        else:
            verdicts.append(present(step.widget, state) == (step.condition is Condition.EXISTS))
    return verdicts

