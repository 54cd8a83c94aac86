"""Acceptance criteria 1-9; each test prints one PASS/FAIL line."""

import json
import random
import re
import socket
import time

import pytest

from logidroid.decision import run_decision_loop
from logidroid.device import (
    DeviceSession,
    SimulatorBackend,
    assertion_verdicts,
    backtrack_widget,
    build_state,
    describe_state,
    replay_case,
    synthesize_case,
)
from logidroid.device.hierarchy import RawWidget
from logidroid.errors import AssertionTargetUnresolved, SessionAborted
from logidroid.evaluation import AnnotatedCase, essential_coverage, evaluate_corpus, perfect_match
from logidroid.fusion import FUSION_ROUNDS, fuse, validate_logic
from logidroid.llm import LLMSession, ScriptedProvider
from logidroid.model import (
    ActionKind,
    Bounds,
    BusinessLogic,
    Condition,
    Instruction,
    InstructionKind,
    LogicStep,
    StepKind,
    TestCase,
    TestStep,
    WidgetPattern,
)
from logidroid.pipeline import RunConfig, RunStatus, run_pipeline
from logidroid.store import HashingEmbedder, KnowledgeStore, brute_force_cosine
from conftest import FIXTURES, GOLDEN_TRANSCRIPT, REQUIREMENT, TARGET_APP, TODO_APP, TRACE_TRANSCRIPT
from test_fusion import MALFORMED, VALID, VOCAB

_synthesized: dict[str, tuple[TestCase, list[bool]]] = {}


@pytest.fixture
def verdict(capsys):
    def emit(n: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} -- {detail}")
        assert ok, detail

    return emit


def _no_network(monkeypatch):
    def refuse(*a, **kw):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


def _golden_run(store_dir, run_dir):
    config = RunConfig(
        requirement=REQUIREMENT, category="To-Do", store_dir=str(store_dir), exclude_app=TARGET_APP,
        llm_spec=f"scripted:{GOLDEN_TRANSCRIPT}", backend_spec=f"sim:{TODO_APP}", run_dir=str(run_dir),
        empty_retry_delay=0,
    )
    result = run_pipeline(config)
    _synthesized["c1"] = (result.case, assertion_verdicts(result.history))
    return result


def _trace_run(trace_path):
    data = json.loads(TRACE_TRANSCRIPT.read_text())
    logic = BusinessLogic.from_dict(data["logic"])
    device = DeviceSession(SimulatorBackend.from_file(TODO_APP), empty_retry_delay=0)
    session = LLMSession(ScriptedProvider(data["entries"]), None, "decision")
    result = run_decision_loop(REQUIREMENT, logic, device, session, trace_path=trace_path)
    _synthesized["c4"] = (synthesize_case(device.history, TARGET_APP, "To-Do"), assertion_verdicts(device.history))
    return logic, result


def test_c1_golden_run(fixture_store, tmp_path, ground_truth, monkeypatch, verdict):
    _no_network(monkeypatch)
    store = KnowledgeStore.load(fixture_store)
    others = [e for e in store.entries if e.category == "To-Do" and e.app_id != TARGET_APP]
    t0 = time.perf_counter()
    result = _golden_run(fixture_store, tmp_path / "run")
    elapsed = time.perf_counter() - t0
    events = sum(s.kind is StepKind.EVENT for s in result.case.steps)
    asserts = sum(s.kind is StepKind.ASSERTION for s in result.case.steps)
    match = perfect_match(result.case, ground_truth)
    ok = len(others) >= 5 and events == 4 and asserts == 2 and bool(match) and elapsed < 5 and result.status is RunStatus.PERFECT
    verdict(1, "end-to-end golden run", ok, f"{events} events, {asserts} assertions, perfect_match={bool(match)}, {elapsed:.3f}s, {len(others)} other-app To-Do entries")


def test_c2_retrieval_oracle(verdict):
    rng = random.Random(2024)
    vocab = "add remove delete todo task item list note search news song play city weather event contact cart pay run timer".split()
    categories = ["To-Do", "Notes", "Browser", "Music", "Weather"]
    store = KnowledgeStore(None, HashingEmbedder(), categories)
    case = TestCase("x", "To-Do", (TestStep.event("click", WidgetPattern(text="add")),))
    for i in range(300):
        summary = "Test " + " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 5)))
        app = f"app{rng.randrange(12)}"
        store.add_summarized(TestCase(app, rng.choice(categories), case.steps), summary)
    embedder = HashingEmbedder()
    mismatches, leaks, slowest, trials = 0, 0, 0.0, 0
    for _ in range(100):
        req = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6)))
        cat, excl = rng.choice(categories), f"app{rng.randrange(12)}"
        q = embedder.embed(req).tolist()
        scored = [
            (-round(brute_force_cosine(q, e.embedding), 9), i)
            for i, e in enumerate(store.entries)
            if e.category == cat and e.app_id != excl
        ]
        oracle = [i for _, i in sorted(scored)]
        for k in (1, 2, 3):
            t0 = time.perf_counter()
            got = store.retrieve(req, cat, excl, k)
            slowest = max(slowest, time.perf_counter() - t0)
            trials += 1
            mismatches += [store.entries.index(r.entry) for r in got] != oracle[:k]
            leaks += any(r.entry.app_id == excl for r in got)
    ok = mismatches == 0 and leaks == 0 and slowest < 1.0
    verdict(2, "retrieval equals brute-force scan", ok, f"{trials} trials, {mismatches} ranking mismatches, {leaks} exclusion leaks, slowest {slowest * 1000:.1f} ms")


def test_c3_fusion_validator(verdict):
    wrong = []
    for name, raw, code in MALFORMED:
        result = validate_logic(raw, REQUIREMENT, VOCAB)
        if not isinstance(result, list) or code not in {v.code for v in result}:
            wrong.append(name)
    two = LLMSession(ScriptedProvider([{"match": {"role": "knowledge_fusion"}, "reply": r} for r in ("```x = 1```", VALID)]))
    accepted = isinstance(fuse(REQUIREMENT, [], "To-Do", two), BusinessLogic)
    capped = LLMSession(ScriptedProvider([{"match": {"role": "knowledge_fusion"}, "reply": "garbage"}] * 10))
    try:
        fuse(REQUIREMENT, [], "To-Do", capped)
    except Exception:
        pass
    ok = not wrong and len(MALFORMED) == 10 and accepted and two.calls == 2 and capped.calls == FUSION_ROUNDS == 3
    verdict(3, "fusion validator suite", ok, f"{len(MALFORMED) - len(wrong)}/10 rejected with expected code, invalid-then-valid used {two.calls} calls, cap hit after {capped.calls} calls")


def test_c4_trace_conformance(tmp_path, verdict):
    logic, result = _trace_run(tmp_path / "trace.jsonl")
    got = (tmp_path / "trace.jsonl").read_text().splitlines()
    expected = (FIXTURES / "expected_trace.jsonl").read_text().splitlines()
    recs = [json.loads(x) for x in got]
    slid = any(r["selection"] == -1 and r["unmatched"] == [2] for r in recs)
    looped = any(r["outcome"] == "skipped" and r["attempts"] == 3 for r in recs)
    ok = got == expected and len(logic.steps) == 6 and slid and looped
    verdict(4, "decision trace conformance", ok, f"{len(got)}/{len(expected)} lines, identical={got == expected}, slide path={slid}, loop guard path={looped}, {result.report.calls} calls")


def test_c5_backtracking(verdict):
    backend = SimulatorBackend.from_file(TODO_APP)
    device = DeviceSession(backend, empty_retry_delay=0)

    def act(wid, action, value=None):
        s = device.perceive()
        device.execute(Instruction(InstructionKind.EVENT, wid, ActionKind(action), value, source_state_id=s.state_id))

    act(2, "click")
    act(1, "edit", "Sample todo")
    act(2, "click")
    row_state = device.perceive()
    device.execute(Instruction(InstructionKind.EVENT, 1, ActionKind.SWIPE_RIGHT, source_state_id=row_state.state_id))
    now = device.perceive()
    desc = backtrack_widget('"sample to do"', device.history)
    in_current = any(w.pattern.shares_attribute(desc.pattern) for _, w in now.widgets)
    passed = device.check(Instruction(InstructionKind.ASSERTION, 1, condition=Condition.NOT_EXISTS, source_state_id=row_state.state_id))
    try:
        backtrack_widget('"weekly groceries"', device.history)
        raised = False
    except AssertionTargetUnresolved:
        raised = True
    ok = desc == row_state.widget(1) and not in_current and passed and raised
    verdict(5, "backtracking assertion", ok, f"target from state {row_state.state_id} resolved={desc == row_state.widget(1)}, absent now={not in_current}, verdict={passed}, unseen raises={raised}")


_WIDGET_LINE = re.compile(r"^widget (\d+): .*ops=\[([^\]]*)\]$", re.MULTILINE)


class AdversarialProvider:
    """Seeded random replies; the target step is always refused completion."""

    provider_id = "adversarial"

    def __init__(self, seed: int, target: str):
        self.rng = random.Random(seed)
        self.target = target
        self.target_judgments = 0

    def _block(self, prompt, start, end):
        return prompt.split(start, 1)[1].split(end, 1)[0]

    def reply(self, request):
        p, rng = request.rendered_prompt, self.rng
        role = request.role.value
        if role == "step_selection":
            cands = re.findall(r"^(\d+): (.*)$", self._block(p, "Candidate steps\n", "\n## "), re.MULTILINE)
            for i, line in cands:
                if self.target in line:
                    return i
            return rng.choice([c[0] for c in cands] + ["(-1)", "(-1)", "maybe", "7", "Answer: 0"])
        step = self._block(p, "Logic step\n", "\n")
        if role == "instruction_generation":
            state = self._block(p, "Current state\n", "\nExecuted instructions")
            clickable = [int(i) for i, ops in _WIDGET_LINE.findall(state) if "click" in ops]
            if self.target in step:
                return json.dumps({"widget_id": rng.choice(clickable), "action": "click"})
            return rng.choice(
                [
                    json.dumps({"widget_id": rng.choice(clickable), "action": "click"}),
                    json.dumps({"widget_id": rng.randrange(8)}),
                    '{"widget_id": 42, "action": "click"}',
                    "I would click the button",
                    '{"widget_id": 0, "action": "teleport"}',
                ]
            )
        if self.target in step:
            self.target_judgments += 1
            return rng.choice(["No", "no.", "NO, not yet"])
        return rng.choice(["Yes", "No", "no idea", "yes!"])


POOL = [
    'Click a widget "add todo item button"',
    'Edit a widget "user todo edit text" with "milk"',
    'Click a widget "make todo floating action button"',
    'Identify a widget "no items yet" in the state',
    'Identify a widget "new to-do" not in the state',
    'Click a widget "undo"',
    'Swipe right a widget "milk"',
]
TARGET = 'Click a widget "archive all"'


def test_c6_attempt_limit_termination(verdict):
    from logidroid.fusion import parse_phrase

    violations, exact, aborted_on_budget = [], 0, 0
    for seed in range(50):
        rng = random.Random(seed)
        phrases = [rng.choice(POOL) for _ in range(rng.randint(2, 7))]
        phrases.insert(rng.randrange(len(phrases) + 1), TARGET)
        logic = BusinessLogic(REQUIREMENT, tuple(LogicStep(parse_phrase(x).kind, x) for x in phrases))
        provider = AdversarialProvider(seed, '"archive all"')
        session = LLMSession(provider, None, "decision")
        device = DeviceSession(SimulatorBackend.from_file(TODO_APP), empty_retry_delay=0)
        limit = rng.choice([1, 2, 3, 4])
        budget = 10 * len(phrases)
        try:
            result = run_decision_loop(REQUIREMENT, logic, device, session, attempt_limit=limit)
        except SessionAborted as exc:
            aborted_on_budget += "budget" in exc.reason
            if session.calls > budget or "budget" not in exc.reason:
                violations.append(f"seed {seed}: {exc.reason} after {session.calls} calls")
            continue
        idx = phrases.index(TARGET)
        if session.calls > budget:
            violations.append(f"seed {seed}: {session.calls} calls > {budget}")
        if provider.target_judgments != limit or result.report.outcomes[idx].value != "skipped":
            violations.append(f"seed {seed}: {provider.target_judgments} judgments (limit {limit}), outcome {result.report.outcomes[idx]}")
        else:
            exact += 1
    ok = not violations and exact + aborted_on_budget == 50 and exact > 0
    verdict(6, "attempt-limit termination", ok, f"{exact}/50 skipped after exactly attempt_limit judgments, {aborted_on_budget} stopped at the budget, violations={violations[:3]}")


def test_c7_metric_exactness(verdict):
    gt = TestCase("a", "To-Do", (TestStep.event("click", WidgetPattern(text="add")), TestStep.assertion("exists", WidgetPattern(text="milk"))))
    other = TestCase("a", "To-Do", (TestStep.event("click", WidgetPattern(text="menu")),))
    report = evaluate_corpus([(gt if i < 4 else other, AnnotatedCase(f"c{i}", gt)) for i in range(10)])
    rng = random.Random(7)
    names = ["add", "save", "milk", "title"]

    def rand_step():
        if rng.random() < 0.3:
            return TestStep.assertion(rng.choice(list(Condition)), WidgetPattern(text=rng.choice(names)))
        action = rng.choice([ActionKind.CLICK, ActionKind.EDIT, ActionKind.SWIPE_LEFT])
        return TestStep.event(action, WidgetPattern(text=rng.choice(names)), "v" if action is ActionKind.EDIT else None)

    perfect, broken = 0, 0
    for _ in range(1000):
        truth = TestCase("a", "To-Do", tuple(rand_step() for _ in range(rng.randint(1, 5))))
        steps = list(truth.steps)
        if rng.random() < 0.5 and len(steps) > 1:
            steps[rng.randrange(len(steps))] = rand_step()
        gen = TestCase("a", "To-Do", tuple(steps))
        if perfect_match(gen, truth):
            perfect += 1
            broken += not essential_coverage(gen, truth)
    ok = report.perfect_rate == 0.4 and report.perfect == 4 and broken == 0 and perfect > 0
    verdict(7, "metric exactness", ok, f"perfect_rate={report.perfect_rate!r}, {perfect} perfect pairs of 1000, {broken} implication failures")


def test_c8_perception_ordering(verdict):
    rng = random.Random(8)
    mismatches, nondeterministic = 0, 0
    for _ in range(1000):
        raw = []
        for k in range(rng.randint(1, 15)):
            left, top = rng.choice([0, 40, 80, rng.randrange(1080)]), rng.choice([0, 100, rng.randrange(1920)])
            raw.append(RawWidget(text=f"w{k}", bounds=Bounds(left, top, left + rng.choice([10, 50]), top + 20)))
        state = build_state(0, raw)
        oracle = [w.text for w in sorted(raw, key=lambda w: (w.bounds.top, w.bounds.left, w.bounds.right, int(w.text[1:])))]
        mismatches += [w.text for _, w in state.widgets] != oracle
        nondeterministic += describe_state(state) != describe_state(build_state(0, list(raw))) or describe_state(state) != state.description
    ok = mismatches == 0 and nondeterministic == 0
    verdict(8, "perception ordering", ok, f"1000 layouts, {mismatches} ordering mismatches, {nondeterministic} non-identical renderings")


def test_c9_replay_soundness(fixture_store, tmp_path, verdict):
    if "c1" not in _synthesized:
        _golden_run(fixture_store, tmp_path / "run")
    if "c4" not in _synthesized:
        _trace_run(tmp_path / "trace.jsonl")
    details, ok = [], True
    for key, (case, recorded) in sorted(_synthesized.items()):
        replayed = replay_case(case, SimulatorBackend.from_file(TODO_APP), empty_retry_delay=0)
        ok &= replayed == recorded and len(recorded) > 0
        details.append(f"{key}: {len(case.steps)} steps, verdicts {replayed} vs recorded {recorded}")
    verdict(9, "replay soundness", ok, "; ".join(details))
