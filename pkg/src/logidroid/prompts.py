"""Prompt templates for the five agent roles.

Each template is laid out as Task Definition, Input Object, Demonstration Case and
Acceptance Criteria. Rendering is a pure function of ``(role, context)``.
"""

from __future__ import annotations

from enum import Enum
from typing import Any, Mapping, Sequence

from .errors import MissingContextField
from .model import TestCase


class PromptRole(str, Enum):
    SUMMARY_GENERATION = "summary_generation"
    KNOWLEDGE_FUSION = "knowledge_fusion"
    STEP_SELECTION = "step_selection"
    INSTRUCTION_GENERATION = "instruction_generation"
    COMPLETION_JUDGMENT = "completion_judgment"


REQUIRED_FIELDS: dict[PromptRole, tuple[str, ...]] = {
    PromptRole.SUMMARY_GENERATION: ("case", "category"),
    PromptRole.KNOWLEDGE_FUSION: ("requirement", "category", "retrieved"),
    PromptRole.STEP_SELECTION: ("requirement", "window_steps", "state_description"),
    PromptRole.INSTRUCTION_GENERATION: ("requirement", "logic_step", "state_description", "executed"),
    PromptRole.COMPLETION_JUDGMENT: ("requirement", "logic_step", "executed", "state_description"),
}

_SUMMARY_DEMO = """\
Example 1: Test case from a Browser app
Step 1: (Event) Click a widget "search"
Step 2: (Event) Edit a widget "search" with "news"
Step 3: (Assertion) Identify a widget "latest news" in the state
Functional summary: Test the search functionality
Example 2: Test case from a Calculator app
Step 1: (Event) Click a widget "7"
Step 2: (Event) Click a widget "plus"
Step 3: (Event) Click a widget "8"
Step 4: (Event) Click a widget "equals"
Step 5: (Assertion) Identify a widget "15" in the state
Functional summary: Test the addition functionality"""

_FUSION_DEMO = """\
Example: Test knowledge for the functionality: [Test the search functionality] in a [Browser] app.
Step 1: (Event) Click a widget "search" or "url" in the search bar
Step 2: (Event) Edit a widget "search" or "url" in the search bar with "news"
Step 3: (Assertion) Identify a widget "latest news" in the state"""

_SELECTION_DEMO = """\
Example: Current state
widget 0: text='Notes' content-desc='' resource-id='toolbar' ops=[]
widget 1: text='' content-desc='New note' resource-id='fab' ops=[click]
Candidate steps
0: (Event) Click a widget "new note"
1: (Event) Edit a widget "note body" with "hello"
Answer: 0"""

_INSTRUCTION_DEMO = """\
Example: Logic step (Event) Edit a widget "note body" with "hello"
widget 0: text='' content-desc='Body' resource-id='note_body' ops=[click, edit]
widget 1: text='Save' content-desc='' resource-id='save' ops=[click]
Answer: {"widget_id": 0, "action": "edit", "value": "hello"}"""

_JUDGMENT_DEMO = """\
Example: Logic step (Event) Click a widget "save"
Executed instructions: click widget 1
Latest state shows the saved note in the list.
Answer: Yes"""


def _section(title: str, body: str) -> str:
    return f"## {title}\n{body.rstrip()}"


def _numbered(lines: Sequence[str], start: int = 0) -> str:
    return "\n".join(f"{i}: {line}" for i, line in enumerate(lines, start)) or "(none)"


def _summary(ctx: Mapping[str, Any]) -> list[str]:
    case: TestCase = ctx["case"]
    category = ctx["category"]
    body = "\n".join([f"Test case from a {category} app", *case.step_lines(), "Functional summary:"])
    return [
        _section(
            "Task Definition",
            "You are a functional summary generator. Based on the test cases for the Android app, "
            "generate a natural and one-sentence description.",
        ),
        _section("Input Object", body),
        _section("Demonstration Case", _SUMMARY_DEMO),
        _section(
            "Acceptance Criteria",
            f"Please generate the functional description for the {category} app.\n"
            "1. Please keep it simple: only include at most the subject, verb, and object.\n"
            "2. Please use natural English, not technical terms.\n"
            "3. Please focus on the main actions, ignore the details.",
        ),
    ]


def _fusion(ctx: Mapping[str, Any]) -> list[str]:
    requirement, category = ctx["requirement"], ctx["category"]
    retrieved: Sequence[TestCase] = ctx["retrieved"]
    min_steps, max_steps = ctx.get("min_steps", 3), ctx.get("max_steps", 15)
    parts = [
        _section(
            "Task Definition",
            f"You are a summarizer to fuse test knowledge for the functionality: [{requirement}] "
            f"in a [{category}] app.",
        )
    ]
    if retrieved:
        blocks = []
        for i, case in enumerate(retrieved, 1):
            blocks.append(f"Related Test Case {i}:")
            blocks.extend(case.step_lines())
        parts.append(_section("Input Object", "\n".join(blocks)))
    parts.append(_section("Demonstration Case", _FUSION_DEMO))
    parts.append(
        _section(
            "Acceptance Criteria",
            f"Please generate the test knowledge for the [{category}] app.\n"
            f"1. The generated test steps should be neither too short nor too long "
            f"(between {min_steps} and {max_steps} steps).\n"
            "2. Please strictly use steps in the format of Event and Assertion\n"
            "(1) (Event) [Action] a widget [Widget] with [Value]\n"
            "(2) (Assertion) Identify a widget [Widget] [Condition]\n"
            "3. Please do not include any code, XPATH, or scripting instructions",
        )
    )
    return parts


def _selection(ctx: Mapping[str, Any]) -> list[str]:
    steps = list(ctx["window_steps"])
    return [
        _section(
            "Task Definition",
            f"You are a step selector for testing the functionality: [{ctx['requirement']}]. "
            "Pick the candidate logic step that applies to the current GUI state.",
        ),
        _section(
            "Input Object",
            f"Current state\n{ctx['state_description']}\nCandidate steps\n{_numbered(steps)}",
        ),
        _section("Demonstration Case", _SELECTION_DEMO),
        _section(
            "Acceptance Criteria",
            "1. Examine the candidate steps in order and choose the first one that can be "
            "performed or verified on the current state.\n"
            f"2. Answer with the candidate number only (0 to {len(steps) - 1}).\n"
            "3. If no candidate step applies, answer (-1).",
        ),
    ]


def _instruction(ctx: Mapping[str, Any]) -> list[str]:
    executed = list(ctx["executed"])
    is_assertion = ctx.get("step_kind", "event") == "assertion"
    if is_assertion:
        answer = 'Answer with one JSON object: {"widget_id": <id of the widget to verify>}.'
    else:
        answer = (
            'Answer with one JSON object: {"widget_id": <id>, "action": <operation>, "value": <text>}. '
            "Operations: click, edit, swipe_left, swipe_right, swipe_up, swipe_down, back. "
            "Include value only for edit."
        )
    return [
        _section(
            "Task Definition",
            f"You are an instruction generator for testing the functionality: [{ctx['requirement']}]. "
            "Map the logic step onto a widget of the current GUI state.",
        ),
        _section(
            "Input Object",
            f"Logic step\n{ctx['logic_step']}\nCurrent state\n{ctx['state_description']}\n"
            f"Executed instructions\n{_numbered(executed, 1)}",
        ),
        _section("Demonstration Case", _INSTRUCTION_DEMO),
        _section(
            "Acceptance Criteria",
            f"1. {answer}\n2. Use only widget ids listed in the current state.\n"
            "3. Do not repeat an executed instruction unless the state requires it.",
        ),
    ]


def _judgment(ctx: Mapping[str, Any]) -> list[str]:
    return [
        _section(
            "Task Definition",
            f"You are a completion judge for testing the functionality: [{ctx['requirement']}]. "
            "Decide whether the logic step has been completed.",
        ),
        _section(
            "Input Object",
            f"Logic step\n{ctx['logic_step']}\nExecuted instructions for this step\n"
            f"{_numbered(list(ctx['executed']), 1)}\nLatest state\n{ctx['state_description']}",
        ),
        _section("Demonstration Case", _JUDGMENT_DEMO),
        _section("Acceptance Criteria", '1. Answer "Yes" if the step is complete, otherwise "No".\n2. Output only Yes or No.'),
    ]


_RENDERERS = {
    PromptRole.SUMMARY_GENERATION: _summary,
    PromptRole.KNOWLEDGE_FUSION: _fusion,
    PromptRole.STEP_SELECTION: _selection,
    PromptRole.INSTRUCTION_GENERATION: _instruction,
    PromptRole.COMPLETION_JUDGMENT: _judgment,
}


def render_prompt(role: PromptRole | str, context: Mapping[str, Any]) -> str:
    role = PromptRole(role)
    for name in REQUIRED_FIELDS[role]:
        if name not in context or context[name] is None:
            raise MissingContextField(role.value, name)
    return "\n\n".join(_RENDERERS[role](context)) + "\n"


def with_feedback(prompt: str, previous_reply: str, problems: Sequence[str]) -> str:
    """Append corrective feedback for a regeneration round."""
    issues = "\n".join(f"- {p}" for p in problems)
    return (
        f"{prompt}\n## Corrective Feedback\nYour previous answer was rejected.\n{issues}\n"
        f"Previous answer:\n{previous_reply.strip()}\nPlease answer again following the acceptance criteria.\n"
    )
