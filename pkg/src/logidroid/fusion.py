"""Knowledge fusion: retrieved cases + requirement -> validated business logic.

Model output is parsed line by line against a two-production step grammar::

    (Event) <Action> a widget <Widget> [with <Value>]
    (Assertion) Identify a widget <Widget> in the state | not in the state

Rejected outputs are sent back with their violations as corrective feedback.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FusionRejected, InvalidValue
from .llm import LLMSession
from .model import (
    ActionKind,
    BusinessLogic,
    Condition,
    LogicStep,
    StepKind,
    TestCase,
    humanize_resource_id,
)
from .prompts import PromptRole, render_prompt, with_feedback

MIN_STEPS = 3
MAX_STEPS = 15
FUSION_ROUNDS = 3

ACTION_SYNONYMS: dict[str, ActionKind] = {
    "click": ActionKind.CLICK,
    "tap": ActionKind.CLICK,
    "press": ActionKind.CLICK,
    "select": ActionKind.CLICK,
    "edit": ActionKind.EDIT,
    "enter": ActionKind.EDIT,
    "type": ActionKind.EDIT,
    "input": ActionKind.EDIT,
    "swipe left": ActionKind.SWIPE_LEFT,
    "swipe right": ActionKind.SWIPE_RIGHT,
    "swipe up": ActionKind.SWIPE_UP,
    "swipe down": ActionKind.SWIPE_DOWN,
    "press back": ActionKind.BACK,
}

VIOLATION_CODES = ("format", "too_short", "too_long", "contains_code", "irrelevant_step", "unknown_action")

STOPWORDS = frozenset(
    """a an the of in on at to with and or for from by into is are be this that it its
    widget widgets button buttons state screen view icon field box bar text edit label""".split()
)

_STEP_PREFIX = re.compile(r"^\s*(?:[-*]\s*)?(?:step\s*\d+\s*[:.)-]|\d+\s*[:.)])\s*", re.IGNORECASE)
_TAG = re.compile(r"^\((event|assertion)\)\s*", re.IGNORECASE)
_ASSERTION = re.compile(r"^identify\s+(?:a\s+|the\s+)?widget\s+(?P<widget>.+?)\s+(?P<neg>not\s+)?in\s+the\s+state\.?$", re.IGNORECASE)
_EVENT = re.compile(r"^(?P<verb>[a-z]+(?:\s+(?:left|right|up|down|back))?)\s+(?:a\s+|the\s+)?widget\s+(?P<rest>.+)$", re.IGNORECASE)
_BACK = re.compile(r"^press\s+back\.?$", re.IGNORECASE)
_QUOTED = re.compile(r'"([^"]*)"|“([^”]*)”|``([^\']*)\'\'|\'([^\']*)\'')
_WITH_VALUE = re.compile(r'^(?P<widget>.+)\s+with\s+(?P<value>"[^"]*"|“[^”]*”|``[^\']*\'\'|\'[^\']*\'|.+)$', re.IGNORECASE)
_CODE = re.compile(
    r"```|xpath|driver\.|findelement|find_element|\bby\.id\b|\bimport\s+\w|\bdef\s+\w+\(|;\s*$"
    r"|(?:^|\s)(?:\.{0,2}/|~/)[\w.-]+/[\w./-]*|\b[\w-]+\.(?:py|java|kt|js|ts|xml|json|sh|apk)\b",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Violation:
    code: str
    line_no: int
    message: str

    def __post_init__(self):
        if self.code not in VIOLATION_CODES:
            raise ValueError(f"unknown violation code {self.code!r}")

    def to_dict(self) -> dict:
        return {"code": self.code, "line_no": self.line_no, "message": self.message}


@dataclass(frozen=True)
class ParsedStep:
    """Structured reading of one logic-step phrase."""

    kind: StepKind
    action: ActionKind | None
    widget: str
    value: str | None
    condition: Condition | None

    @property
    def widget_names(self) -> list[str]:
        return widget_alternatives(self.widget)


def _unquote(text: str) -> str:
    text = text.strip().rstrip(".").strip()
    m = _QUOTED.fullmatch(text)
    if m:
        return next(g for g in m.groups() if g is not None)
    return text


def widget_alternatives(widget: str) -> list[str]:
    """Quoted names inside a widget phrase, or the bare phrase when nothing is quoted."""
    names = [next(g for g in m.groups() if g is not None) for m in _QUOTED.finditer(widget)]
    names = [n.strip() for n in names if n.strip()]
    return names or [widget.strip()]


def parse_phrase(phrase: str) -> ParsedStep:
    """Classify a phrase by its wording; raises InvalidValue (format) or KeyError (unknown action)."""
    text = phrase.strip()
    m = _ASSERTION.match(text)
    if m:
        cond = Condition.NOT_EXISTS if m.group("neg") else Condition.EXISTS
        return ParsedStep(StepKind.ASSERTION, None, m.group("widget").strip(), None, cond)
    if _BACK.match(text):
        return ParsedStep(StepKind.EVENT, ActionKind.BACK, "", None, None)
    m = _EVENT.match(text)
    if not m:
        raise InvalidValue(f"not a step phrase: {phrase!r}")
    verb = " ".join(m.group("verb").lower().split())
    action = ACTION_SYNONYMS.get(verb)
    if action is None:
        raise KeyError(verb)
    rest = m.group("rest").strip().rstrip(".")
    value = None
    wv = _WITH_VALUE.match(rest)
    if wv and action is ActionKind.EDIT:
        rest, value = wv.group("widget").strip(), _unquote(wv.group("value"))
    elif action is ActionKind.EDIT:
        raise InvalidValue(f"edit step without a value: {phrase!r}")
    return ParsedStep(StepKind.EVENT, action, rest, value, None)


def content_words(text: str) -> set[str]:
    words = set()
    for tok in re.findall(r"[a-z0-9]+", text.lower()):
        if tok in STOPWORDS:
            continue
        words.add(tok)
        if len(tok) > 3 and tok.endswith("s"):
            words.add(tok[:-1])
    # "to do" should meet "todo"
    toks = re.findall(r"[a-z0-9]+", text.lower())
    words.update(a + b for a, b in zip(toks, toks[1:]))
    return words


def build_vocabulary(requirement: str, retrieved: Iterable[TestCase] = (), category: str = "") -> set[str]:
    vocab = content_words(requirement) | content_words(category)
    for case in retrieved:
        for step in case.steps:
            w = step.widget
            vocab |= content_words(" ".join([w.text, w.content_desc, humanize_resource_id(w.resource_id)]))
            if step.value:
                vocab |= content_words(step.value)
    return vocab


def _relevant(parsed: ParsedStep, vocabulary: set[str]) -> bool:
    if parsed.action is ActionKind.BACK:
        return True
    words = content_words(parsed.widget + " " + (parsed.value or ""))
    return not words or bool(words & vocabulary)


def validate_logic(
    raw: str,
    functionality: str = "",
    vocabulary: set[str] | None = None,
    min_steps: int = MIN_STEPS,
    max_steps: int = MAX_STEPS,
) -> BusinessLogic | list[Violation]:
    """Parse model output into BusinessLogic, or return every violation found.

    Non-step lines before the first step are tolerated as preamble. ``vocabulary``
    enables the lexical relevance check; ``None`` disables it.
    """
    violations: list[Violation] = []
    steps: list[LogicStep] = []
    started = False
    candidates = 0
    for line_no, line in enumerate((raw or "").splitlines(), 1):
        if not line.strip():
            continue
        if _CODE.search(line):
            violations.append(Violation("contains_code", line_no, f"code or scripting content: {line.strip()!r}"))
            if started or _STEP_PREFIX.match(line) or _TAG.match(line.strip()):
                started = True
                candidates += 1
            continue
        body = _STEP_PREFIX.sub("", line, count=1)
        has_prefix = body != line
        body = body.strip()
        tag = _TAG.match(body)
        if not (has_prefix or tag):
            if started:
                candidates += 1
                violations.append(Violation("format", line_no, f"not a step line: {line.strip()!r}"))
            continue
        started = True
        candidates += 1
        if not tag:
            violations.append(Violation("format", line_no, "missing (Event) or (Assertion) tag"))
            continue
        phrase = body[tag.end():].strip()
        try:
            parsed = parse_phrase(phrase)
        except KeyError as exc:
            violations.append(Violation("unknown_action", line_no, f"unknown action {exc.args[0]!r}"))
            continue
        except InvalidValue as exc:
            violations.append(Violation("format", line_no, str(exc)))
            continue
        if vocabulary is not None and not _relevant(parsed, vocabulary):
            violations.append(Violation("irrelevant_step", line_no, f"widget {parsed.widget!r} unrelated to the requirement"))
            continue
        steps.append(LogicStep(parsed.kind, phrase.rstrip(".").strip()))
    total = candidates
    if total < min_steps:
        violations.append(Violation("too_short", 0, f"{total} steps, at least {min_steps} required"))
    elif total > max_steps:
        violations.append(Violation("too_long", 0, f"{total} steps, at most {max_steps} allowed"))
    if violations:
        return violations
    return BusinessLogic(functionality, tuple(steps))


def _feedback_lines(violations: Sequence[Violation]) -> list[str]:
    return [f"line {v.line_no}: {v.code}: {v.message}" if v.line_no else f"{v.code}: {v.message}" for v in violations]


def fuse(
    requirement: str,
    retrieved: Sequence[TestCase],
    category: str,
    session: LLMSession,
    rounds: int = FUSION_ROUNDS,
    min_steps: int = MIN_STEPS,
    max_steps: int = MAX_STEPS,
) -> BusinessLogic:
    """Ask the model for business logic; at most ``rounds`` provider calls."""
    context = {
        "requirement": requirement,
        "category": category,
        "retrieved": list(retrieved),
        "min_steps": min_steps,
        "max_steps": max_steps,
    }
    base = render_prompt(PromptRole.KNOWLEDGE_FUSION, context)
    vocabulary = build_vocabulary(requirement, retrieved, category)
    prompt = base
    result: BusinessLogic | list[Violation] = []
    for _ in range(rounds):
        reply = session.ask(PromptRole.KNOWLEDGE_FUSION, prompt)
        result = validate_logic(reply, requirement, vocabulary, min_steps, max_steps)
        if isinstance(result, BusinessLogic):
            return result
        prompt = with_feedback(base, reply, _feedback_lines(result))
    raise FusionRejected(result, rounds)
