import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logidroid.errors import InvalidValue
from logidroid.model import (
    ActionKind,
    Bounds,
    BusinessLogic,
    Condition,
    GuiState,
    Instruction,
    InstructionKind,
    StepKind,
    TestCase,
    TestStep,
    WidgetDescriptor,
    WidgetPattern,
    canonicalize_step,
    spatial_order,
    steps_equal,
)
from strategies import bounds, cases, descriptors, gui_states, logics, steps


def W(**kw):
    return WidgetPattern(**kw)


class TestInvariants:
    def test_descriptor_needs_an_attribute(self):
        with pytest.raises(InvalidValue):
            WidgetDescriptor("", "", "", frozenset(), Bounds(0, 0, 1, 1))

    def test_bounds_ordered(self):
        with pytest.raises(InvalidValue):
            Bounds(10, 0, 5, 5)
        with pytest.raises(InvalidValue):
            Bounds(0, 10, 5, 5)

    def test_edit_requires_value_and_others_forbid_it(self):
        with pytest.raises(InvalidValue):
            TestStep.event("edit", W(text="title"))
        with pytest.raises(InvalidValue):
            TestStep.event("click", W(text="add"), "x")
        assert TestStep.event("edit", W(text="title"), "").value == ""

    def test_assertion_shape(self):
        with pytest.raises(InvalidValue):
            TestStep(StepKind.ASSERTION, W(text="x"), value="v", condition=Condition.EXISTS)
        with pytest.raises(InvalidValue):
            TestStep(StepKind.ASSERTION, W(text="x"), action=ActionKind.CLICK)
        with pytest.raises(InvalidValue):
            TestStep(StepKind.EVENT, W(text="x"), action=ActionKind.CLICK, condition=Condition.EXISTS)

    def test_case_needs_steps(self):
        with pytest.raises(InvalidValue):
            TestCase("app", "To-Do", ())

    def test_state_ids_dense(self):
        d = WidgetDescriptor("a", "", "", frozenset(), Bounds(0, 0, 1, 1))
        with pytest.raises(InvalidValue):
            GuiState(0, ((1, d),))

    def test_instruction_payloads(self):
        with pytest.raises(InvalidValue):
            Instruction(InstructionKind.EVENT, None, ActionKind.CLICK)
        with pytest.raises(InvalidValue):
            Instruction(InstructionKind.ASSERTION, 1)
        with pytest.raises(InvalidValue):
            Instruction(InstructionKind.NO_MATCH, 1)
        assert Instruction(InstructionKind.EVENT, None, ActionKind.BACK).widget_id is None


class TestCanonicalize:
    def test_whitespace_and_case(self):
        s = canonicalize_step(TestStep.event("click", W(text=" Add  ")))
        assert s == TestStep.event("click", W(text="add"))

    def test_already_canonical(self):
        s = TestStep.assertion("exists", W(resource_id="todo_title"))
        assert canonicalize_step(s) == s

    def test_hand_varied_steps_collapse(self):
        base = [
            TestStep.event("click", W(text="Add", resource_id="app:id/fab")),
            TestStep.event("edit", W(content_desc="Title"), "Sample todo"),
            TestStep.assertion("exists", W(text="Sample todo")),
            TestStep.assertion("not_exists", W(text="Sample todo", resource_id="row")),
            TestStep.event("swipe_right", W(text="Sample todo")),
        ]
        variants = [
            [TestStep.event("click", W(text="ADD", resource_id="APP:ID/FAB")),
             TestStep.event("click", W(text="  add ", resource_id="app:id/fab  ")),
             TestStep.event("click", W(text="aDd", resource_id="App:Id/Fab")),
             TestStep.event("click", W(text="Add\t", resource_id=" app:id/fab"))],
            [TestStep.event("edit", W(content_desc="TITLE"), "SAMPLE TODO"),
             TestStep.event("edit", W(content_desc=" title "), "sample  todo"),
             TestStep.event("edit", W(content_desc="Title"), " Sample Todo"),
             TestStep.event("edit", W(content_desc="tItLe"), "sample todo ")],
            [TestStep.assertion("exists", W(text="SAMPLE TODO")),
             TestStep.assertion("exists", W(text="sample   todo")),
             TestStep.assertion("exists", W(text=" Sample todo")),
             TestStep.assertion("exists", W(text="Sample Todo"))],
            [TestStep.assertion("not_exists", W(text="sample todo", resource_id="ROW")),
             TestStep.assertion("not_exists", W(text="SAMPLE todo", resource_id=" row")),
             TestStep.assertion("not_exists", W(text="Sample  Todo", resource_id="Row")),
             TestStep.assertion("not_exists", W(text="sample TODO ", resource_id="row "))],
            [TestStep.event("swipe_right", W(text="SAMPLE TODO")),
             TestStep.event("swipe_right", W(text=" sample todo")),
             TestStep.event("swipe_right", W(text="Sample\ntodo")),
             TestStep.event("swipe_right", W(text="sample Todo"))],
        ]
        assert sum(len(v) for v in variants) == 20
        for b, vs in zip(base, variants):
            for v in vs:
                assert canonicalize_step(v) == canonicalize_step(b)

    @given(steps())
    def test_idempotent(self, s):
        once = canonicalize_step(s)
        assert canonicalize_step(once) == once


class TestStepsEqual:
    def test_shared_text(self):
        assert steps_equal(TestStep.event("click", W(text="add")), TestStep.event("click", W(resource_id="fab", text="add")))

    def test_action_mismatch(self):
        w = W(text="title")
        assert not steps_equal(TestStep.event("click", w), TestStep.event("edit", w, "x"))

    def test_condition_mismatch(self):
        w = W(text="sample todo")
        assert not steps_equal(TestStep.assertion("exists", w), TestStep.assertion("not_exists", w))

    def test_no_shared_attribute(self):
        assert not steps_equal(TestStep.event("click", W(text="add")), TestStep.event("click", W(content_desc="add")))

    @given(steps(), steps())
    def test_symmetric(self, a, b):
        assert steps_equal(a, b) == steps_equal(b, a)

    @given(steps())
    def test_reflexive(self, a):
        assert steps_equal(canonicalize_step(a), canonicalize_step(a))


class TestSerialization:
    @given(cases())
    def test_case_round_trip(self, c):
        assert TestCase.from_dict(json.loads(json.dumps(c.to_dict()))) == c

    @given(gui_states())
    def test_state_round_trip(self, s):
        assert GuiState.from_dict(json.loads(json.dumps(s.to_dict()))) == s

    @given(logics())
    def test_logic_round_trip(self, logic):
        assert BusinessLogic.from_dict(json.loads(json.dumps(logic.to_dict()))) == logic

    @given(descriptors())
    def test_descriptor_round_trip(self, d):
        assert WidgetDescriptor.from_dict(d.to_dict()) == d

    @given(st.sampled_from(list(InstructionKind)), st.integers(0, 9), st.sampled_from(list(ActionKind)))
    def test_instruction_round_trip(self, kind, wid, action):
        if kind is InstructionKind.EVENT:
            i = Instruction(kind, wid, action, "v" if action is ActionKind.EDIT else None, source_state_id=3)
        elif kind is InstructionKind.ASSERTION:
            i = Instruction(kind, wid, condition=Condition.NOT_EXISTS, source_state_id=1)
        else:
            i = Instruction(kind)
        assert Instruction.from_dict(json.loads(json.dumps(i.to_dict()))) == i

    def test_canonical_file_format_omits_absent_optionals(self):
        d = TestStep.event("click", W(text="Add")).to_dict()
        assert d == {"kind": "event", "action": "click", "widget": {"text": "Add", "resource_id": "", "content_desc": ""}}
        a = TestStep.assertion("exists", W(text="x")).to_dict()
        assert set(a) == {"kind", "widget", "condition"}

    def test_describe_matches_prompt_phrasing(self):
        s = TestStep.event("edit", W(resource_id="app:id/user_todo_edit_text"), "sample todo")
        assert s.describe() == '(Event) Edit a widget "user todo edit text" with "sample todo"'
        a = TestStep.assertion("not_exists", W(text="sample to do"))
        assert a.describe() == '(Assertion) Identify a widget "sample to do" not in the state'


def _sorted_oracle(ws):
    idx = list(range(len(ws)))
    # independent formulation: stable sort by the least significant keys first
    idx.sort(key=lambda i: ws[i].bounds.right)
    idx.sort(key=lambda i: (ws[i].bounds.top, ws[i].bounds.left))
    return [ws[i] for i in idx]


def test_spatial_order_matches_oracle_on_random_layouts():
    rng = random.Random(7)
    for _ in range(1000):
        ws = []
        for k in range(rng.randint(1, 12)):
            l, t = rng.choice([0, 10, 20, 30]), rng.choice([0, 50, 100])
            ws.append(WidgetDescriptor(f"w{k}", "", "", frozenset(), Bounds(l, t, l + rng.choice([5, 10]), t + 5)))
        assert spatial_order(ws) == _sorted_oracle(ws)


@settings(max_examples=50)
@given(st.lists(bounds(), min_size=1, max_size=10))
def test_spatial_order_is_top_left_monotone(bs):
    ws = [WidgetDescriptor(f"w{i}", "", "", frozenset(), b) for i, b in enumerate(bs)]
    keys = [(w.bounds.top, w.bounds.left) for w in spatial_order(ws)]
    assert keys == sorted(keys)
