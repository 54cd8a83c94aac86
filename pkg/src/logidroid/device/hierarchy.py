"""Raw widget records and the uiautomator XML dump format."""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable

from ..model import ActionKind, Bounds

_BOUNDS = re.compile(r"\[(-?\d+),(-?\d+)\]\[(-?\d+),(-?\d+)\]")
_EDIT_CLASSES = ("EditText", "AutoCompleteTextView", "SearchView")
SWIPES = (ActionKind.SWIPE_LEFT, ActionKind.SWIPE_RIGHT, ActionKind.SWIPE_UP, ActionKind.SWIPE_DOWN)


@dataclass(frozen=True)
class RawWidget:
    """One node as reported by a backend, before filtering and ordering."""

    text: str = ""
    content_desc: str = ""
    resource_id: str = ""
    class_name: str = ""
    bounds: Bounds = field(default_factory=lambda: Bounds(0, 0, 0, 0))
    ops: frozenset[ActionKind] = frozenset()

    @property
    def describable(self) -> bool:
        return any(v.strip() for v in (self.text, self.content_desc, self.resource_id))


@dataclass(frozen=True)
class Dump:
    widgets: tuple[RawWidget, ...]
    raw: str


def parse_bounds(value: str) -> Bounds:
    m = _BOUNDS.fullmatch(value.strip())
    if not m:
        raise ValueError(f"bad bounds attribute {value!r}")
    return Bounds(*(int(g) for g in m.groups()))


def format_bounds(b: Bounds) -> str:
    return f"[{b.left},{b.top}][{b.right},{b.bottom}]"


def _node_ops(node: ET.Element) -> set[ActionKind]:
    ops: set[ActionKind] = set()
    cls = node.get("class", "")
    flag = lambda name: node.get(name) == "true"  # noqa: E731
    if flag("clickable") or flag("checkable") or flag("long-clickable"):
        ops.add(ActionKind.CLICK)
    if any(cls.endswith(c) for c in _EDIT_CLASSES):
        ops |= {ActionKind.CLICK, ActionKind.EDIT}
    if flag("scrollable") or flag("long-clickable"):
        ops.update(SWIPES)
    return ops


def parse_hierarchy(xml_text: str) -> list[RawWidget]:
    """Flatten a ``uiautomator dump`` into RawWidgets in traversal order.

    A node without key attributes cannot be named, so its ops are inherited by
    its named descendants (a clickable row wrapping a text label).
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise ValueError(f"unparseable hierarchy dump: {exc}") from exc
    out: list[RawWidget] = []

    def walk(node: ET.Element, inherited: frozenset[ActionKind]) -> None:
        for child in node:
            if child.tag != "node":
                walk(child, inherited)
                continue
            ops = _node_ops(child)
            raw = RawWidget(
                text=child.get("text", ""),
                content_desc=child.get("content-desc", ""),
                resource_id=child.get("resource-id", ""),
                class_name=child.get("class", ""),
                bounds=parse_bounds(child.get("bounds", "[0,0][0,0]")),
                ops=frozenset(ops | inherited),
            )
            out.append(raw)
            walk(child, inherited if raw.describable else frozenset(ops | inherited))

    walk(root, frozenset())
    return out


def render_hierarchy(widgets: Iterable[RawWidget], package: str = "") -> str:
    """Serialise widgets as a flat uiautomator-style dump."""
    root = ET.Element("hierarchy", rotation="0")
    for i, w in enumerate(widgets):
        ET.SubElement(
            root,
            "node",
            {
                "index": str(i),
                "text": w.text,
                "resource-id": w.resource_id,
                "class": w.class_name or ("android.widget.EditText" if ActionKind.EDIT in w.ops else "android.view.View"),
                "package": package,
                "content-desc": w.content_desc,
                "checkable": "false",
                "clickable": str(ActionKind.CLICK in w.ops).lower(),
                "long-clickable": str(any(op in w.ops for op in SWIPES)).lower(),
                "scrollable": "false",
                "enabled": "true",
                "bounds": format_bounds(w.bounds),
            },
        )
    return "<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>" + ET.tostring(root, encoding="unicode")
