"""Domain vocabulary: widgets, steps, test cases, GUI states, logic and instructions.

Every type is an immutable value with a ``to_dict``/``from_dict`` pair producing the
canonical JSON forms consumed by the store, the run directory and the CLI.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import InvalidValue


class ActionKind(str, Enum):
    CLICK = "click"
    EDIT = "edit"
    SWIPE_LEFT = "swipe_left"
    SWIPE_RIGHT = "swipe_right"
    SWIPE_UP = "swipe_up"
    SWIPE_DOWN = "swipe_down"
    BACK = "back"

    @property
    def verb(self) -> str:
        return _VERBS[self]

    @property
    def is_swipe(self) -> bool:
        return self.value.startswith("swipe_")


_VERBS = {
    ActionKind.CLICK: "Click",
    ActionKind.EDIT: "Edit",
    ActionKind.SWIPE_LEFT: "Swipe left",
    ActionKind.SWIPE_RIGHT: "Swipe right",
    ActionKind.SWIPE_UP: "Swipe up",
    ActionKind.SWIPE_DOWN: "Swipe down",
    ActionKind.BACK: "Press back",
}


class StepKind(str, Enum):
    EVENT = "event"
    ASSERTION = "assertion"


class Condition(str, Enum):
    EXISTS = "exists"
    NOT_EXISTS = "not_exists"


def canonical_text(value: str | None) -> str:
    """Trim, collapse inner whitespace and case-fold."""
    if not value:
        return ""
    return " ".join(value.split()).casefold()


def compact_text(value: str | None) -> str:
    """Case-folded alphanumerics only; lets "sample to do" meet "Sample todo"."""
    return re.sub(r"[\W_]+", "", canonical_text(value))


def humanize_resource_id(resource_id: str) -> str:
    tail = resource_id.rsplit("/", 1)[-1]
    tail = re.sub(r"([a-z0-9])([A-Z])", r"\1 \2", tail)
    return " ".join(re.split(r"[_\-.\s]+", tail)).strip().lower()


@dataclass(frozen=True)
class Bounds:
    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        if self.left > self.right or self.top > self.bottom:
            raise InvalidValue(f"malformed bounds {self.as_list()}")

    @property
    def center(self) -> tuple[int, int]:
        return (self.left + self.right) // 2, (self.top + self.bottom) // 2

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    def as_list(self) -> list[int]:
        return [self.left, self.top, self.right, self.bottom]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "Bounds":
        if len(values) != 4:
            raise InvalidValue(f"bounds need 4 coordinates, got {values!r}")
        return cls(*(int(v) for v in values))


_ATTRS = ("text", "content_desc", "resource_id")


@dataclass(frozen=True)
class WidgetPattern:
    """The three semantic attributes that name a widget; any subset may be empty."""

    text: str = ""
    content_desc: str = ""
    resource_id: str = ""

    def __post_init__(self):
        for name in _ATTRS:
            if getattr(self, name) is None:
                object.__setattr__(self, name, "")

    @property
    def is_empty(self) -> bool:
        return not any(getattr(self, a).strip() for a in _ATTRS)

    def canonical(self) -> "WidgetPattern":
        return WidgetPattern(*(canonical_text(getattr(self, a)) for a in _ATTRS))

    def shares_attribute(self, other: "WidgetPattern") -> bool:
        a, b = self.canonical(), other.canonical()
        return any(getattr(a, n) and getattr(a, n) == getattr(b, n) for n in _ATTRS)

    def matches_phrase(self, phrase: str) -> bool:
        """True if ``phrase`` names this widget by any attribute (tolerant of spacing)."""
        target = compact_text(phrase)
        if not target:
            return False
        candidates = [self.text, self.content_desc, self.resource_id]
        if self.resource_id:
            candidates.append(humanize_resource_id(self.resource_id))
        return any(target == compact_text(c) for c in candidates if c)

    def display_name(self) -> str:
        if self.text.strip():
            return self.text.strip()
        if self.content_desc.strip():
            return self.content_desc.strip()
        return humanize_resource_id(self.resource_id)

    def to_dict(self) -> dict[str, str]:
        return {"text": self.text, "resource_id": self.resource_id, "content_desc": self.content_desc}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WidgetPattern":
        return cls(
            text=data.get("text") or "",
            content_desc=data.get("content_desc") or "",
            resource_id=data.get("resource_id") or "",
        )


@dataclass(frozen=True)
class WidgetDescriptor:
    text: str
    content_desc: str
    resource_id: str
    supported_ops: frozenset[ActionKind]
    bounds: Bounds

    def __post_init__(self):
        if self.pattern.is_empty:
            raise InvalidValue("widget needs at least one of text/content_desc/resource_id")
        object.__setattr__(self, "supported_ops", frozenset(ActionKind(o) for o in self.supported_ops))

    @property
    def pattern(self) -> WidgetPattern:
        return WidgetPattern(self.text, self.content_desc, self.resource_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.pattern.to_dict(),
            "ops": sorted(op.value for op in self.supported_ops),
            "bounds": self.bounds.as_list(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WidgetDescriptor":
        return cls(
            text=data.get("text") or "",
            content_desc=data.get("content_desc") or "",
            resource_id=data.get("resource_id") or "",
            supported_ops=frozenset(ActionKind(o) for o in data.get("ops", ())),
            bounds=Bounds.from_list(data["bounds"]),
        )


@dataclass(frozen=True)
class TestStep:
    __test__ = False  # keep pytest from collecting this class

    kind: StepKind
    widget: WidgetPattern
    action: ActionKind | None = None
    value: str | None = None
    condition: Condition | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StepKind(self.kind))
        if self.action is not None:
            object.__setattr__(self, "action", ActionKind(self.action))
        if self.condition is not None:
            object.__setattr__(self, "condition", Condition(self.condition))
        if self.kind is StepKind.EVENT:
            if self.action is None or self.condition is not None:
                raise InvalidValue("event steps carry an action and no condition")
            if self.action is ActionKind.EDIT and self.value is None:
                raise InvalidValue("edit events need an input value")
            if self.action is not ActionKind.EDIT and self.value is not None:
                raise InvalidValue(f"{self.action.value} events take no input value")
            if self.action is not ActionKind.BACK and self.widget.is_empty:
                raise InvalidValue("event widget has no attributes")
        else:
            if self.condition is None or self.action is not None:
                raise InvalidValue("assertion steps carry a condition and no action")
            if self.value is not None:
                raise InvalidValue("assertion steps take no value")
            if self.widget.is_empty:
                raise InvalidValue("assertion widget has no attributes")

    @classmethod
    def event(cls, action: ActionKind | str, widget: WidgetPattern, value: str | None = None) -> "TestStep":
        return cls(StepKind.EVENT, widget, action=ActionKind(action), value=value)

    @classmethod
    def assertion(cls, condition: Condition | str, widget: WidgetPattern) -> "TestStep":
        return cls(StepKind.ASSERTION, widget, condition=Condition(condition))

    def describe(self) -> str:
        """Render as a prompt line body, e.g. ``(Event) Click a widget "add"``."""
        name = self.widget.display_name()
        if self.kind is StepKind.ASSERTION:
            where = "in the state" if self.condition is Condition.EXISTS else "not in the state"
            return f'(Assertion) Identify a widget "{name}" {where}'
        if self.action is ActionKind.BACK:
            return "(Event) Press back"
        line = f'(Event) {self.action.verb} a widget "{name}"'
        if self.value is not None:
            line += f' with "{self.value}"'
        return line

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.action is not None:
            out["action"] = self.action.value
        out["widget"] = self.widget.to_dict()
        if self.value is not None:
            out["value"] = self.value
        if self.condition is not None:
            out["condition"] = self.condition.value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TestStep":
        try:
            return cls(
                kind=StepKind(data["kind"]),
                widget=WidgetPattern.from_dict(data.get("widget") or {}),
                action=ActionKind(data["action"]) if data.get("action") is not None else None,
                value=data.get("value"),
                condition=Condition(data["condition"]) if data.get("condition") is not None else None,
            )
        except (KeyError, ValueError) as exc:
            if isinstance(exc, InvalidValue):
                raise
            raise InvalidValue(f"malformed step {data!r}: {exc}") from exc


@dataclass(frozen=True)
class TestCase:
    __test__ = False

    app_id: str
    category: str
    steps: tuple[TestStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise InvalidValue("a test case needs at least one step")

    @property
    def events(self) -> list[TestStep]:
        return [s for s in self.steps if s.kind is StepKind.EVENT]

    @property
    def assertions(self) -> list[TestStep]:
        return [s for s in self.steps if s.kind is StepKind.ASSERTION]

    def step_lines(self) -> list[str]:
        return [f"Step {i}: {s.describe()}" for i, s in enumerate(self.steps, 1)]

    def to_dict(self) -> dict[str, Any]:
        return {"app": self.app_id, "category": self.category, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TestCase":
        if "steps" not in data:
            raise InvalidValue("test case document has no 'steps'")
        return cls(
            app_id=str(data.get("app", "")),
            category=str(data.get("category", "")),
            steps=tuple(TestStep.from_dict(s) for s in data["steps"]),
        )


def spatial_sort_key(bounds: Bounds, traversal_index: int) -> tuple[int, int, int, int]:
    return (bounds.top, bounds.left, bounds.right, traversal_index)


def spatial_order(widgets: Iterable[WidgetDescriptor]) -> list[WidgetDescriptor]:
    """Order top-left to bottom-right; ties by right edge, then traversal position."""
    indexed = list(enumerate(widgets))
    indexed.sort(key=lambda iw: spatial_sort_key(iw[1].bounds, iw[0]))
    return [w for _, w in indexed]


@dataclass(frozen=True)
class GuiState:
    state_id: int
    widgets: tuple[tuple[int, WidgetDescriptor], ...]
    description: str = ""
    screenshot_ref: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "widgets", tuple((int(i), w) for i, w in self.widgets))
        if [i for i, _ in self.widgets] != list(range(len(self.widgets))):
            raise InvalidValue("widget ids must be dense 0..n-1 in order")

    def widget(self, widget_id: int) -> WidgetDescriptor:
        if not 0 <= widget_id < len(self.widgets):
            raise KeyError(widget_id)
        return self.widgets[widget_id][1]

    def find(self, pattern: WidgetPattern) -> list[int]:
        return [i for i, w in self.widgets if w.pattern.shares_attribute(pattern)]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "state_id": self.state_id,
            "widgets": [{"id": i, **w.to_dict()} for i, w in self.widgets],
            "description": self.description,
        }
        if self.screenshot_ref is not None:
            out["screenshot_ref"] = self.screenshot_ref
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GuiState":
        return cls(
            state_id=int(data["state_id"]),
            widgets=tuple((int(w["id"]), WidgetDescriptor.from_dict(w)) for w in data["widgets"]),
            description=data.get("description", ""),
            screenshot_ref=data.get("screenshot_ref"),
        )


@dataclass(frozen=True)
class LogicStep:
    kind: StepKind
    phrase: str

    def __post_init__(self):
        object.__setattr__(self, "kind", StepKind(self.kind))

    def render(self, number: int) -> str:
        tag = "Event" if self.kind is StepKind.EVENT else "Assertion"
        return f"Step {number}: ({tag}) {self.phrase}"

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind.value, "phrase": self.phrase}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LogicStep":
        return cls(StepKind(data["kind"]), data["phrase"])


@dataclass(frozen=True)
class BusinessLogic:
    functionality: str
    steps: tuple[LogicStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def render(self) -> str:
        return "\n".join(s.render(i) for i, s in enumerate(self.steps, 1))

    def to_dict(self) -> dict[str, Any]:
        return {"functionality": self.functionality, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BusinessLogic":
        return cls(data["functionality"], tuple(LogicStep.from_dict(s) for s in data["steps"]))


class InstructionKind(str, Enum):
    EVENT = "event"
    ASSERTION = "assertion"
    NO_MATCH = "no_match"
    TASK_COMPLETE = "task_complete"


@dataclass(frozen=True)
class Instruction:
    kind: InstructionKind
    widget_id: int | None = None
    action: ActionKind | None = None
    value: str | None = None
    condition: Condition | None = None
    source_state_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InstructionKind(self.kind))
        if self.action is not None:
            object.__setattr__(self, "action", ActionKind(self.action))
        if self.condition is not None:
            object.__setattr__(self, "condition", Condition(self.condition))
        if self.kind is InstructionKind.EVENT:
            # back is a device-level key press and needs no widget
            if self.action is None or (self.widget_id is None and self.action is not ActionKind.BACK):
                raise InvalidValue("event instructions need widget_id and action")
        elif self.kind is InstructionKind.ASSERTION:
            if self.widget_id is None or self.condition is None:
                raise InvalidValue("assertion instructions need widget_id and condition")
        elif any(v is not None for v in (self.widget_id, self.action, self.value, self.condition)):
            raise InvalidValue(f"{self.kind.value} instructions carry no payload")

    def describe(self) -> str:
        if self.kind is InstructionKind.EVENT:
            if self.action is ActionKind.BACK:
                return "press back"
            text = f"{self.action.value} widget {self.widget_id}"
            return text + (f' with "{self.value}"' if self.value is not None else "")
        if self.kind is InstructionKind.ASSERTION:
            return f"assert widget {self.widget_id} {self.condition.value} (state {self.source_state_id})"
        return self.kind.value

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        for name in ("widget_id", "action", "value", "condition", "source_state_id"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v.value if isinstance(v, Enum) else v
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Instruction":
        return cls(
            kind=InstructionKind(data["kind"]),
            widget_id=data.get("widget_id"),
            action=ActionKind(data["action"]) if data.get("action") else None,
            value=data.get("value"),
            condition=Condition(data["condition"]) if data.get("condition") else None,
            source_state_id=data.get("source_state_id"),
        )


def canonicalize_step(step: TestStep) -> TestStep:
    return replace(
        step,
        widget=step.widget.canonical(),
        value=canonical_text(step.value) if step.value is not None else None,
    )


def steps_equal(a: TestStep, b: TestStep) -> bool:
    """Same kind, action, value and condition, and at least one equal widget attribute."""
    ca, cb = canonicalize_step(a), canonicalize_step(b)
    if (ca.kind, ca.action, ca.value, ca.condition) != (cb.kind, cb.action, cb.value, cb.condition):
        return False
    if ca.action is ActionKind.BACK:
        return True
    return ca.widget.shares_attribute(cb.widget)
