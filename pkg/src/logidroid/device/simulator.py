"""Deterministic finite-state app simulator used as the default device backend.

App model file::

    {"app": "todo", "initial": "S1",
     "states": {"S1": [{"text": ..., "content_desc": ..., "resource_id": ...,
                        "class": ..., "bounds": [l, t, r, b], "ops": ["click"]}]},
     "transitions": [{"from": "S1", "on": {"widget": {"resource_id": "fab"}, "action": "click",
                                           "value": "optional exact value"},
                      "to": "S2",
                      "effects": [{"state": "S3", "add": [<widget spec>], "remove": [<selector>]}]}]}

Edits always replace the target widget's text. Widget text in ``add`` effects may use
``{field:<resource_id>}``, substituted with the last value typed into that widget.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..errors import ActionUnsupported, InvalidValue, StaleWidget
from ..model import ActionKind, Bounds, canonical_text
from .hierarchy import Dump, RawWidget, render_hierarchy

_FIELD = re.compile(r"\{field:([^}]+)\}")
_SELECTOR_KEYS = ("text", "content_desc", "resource_id")


def selector_matches(selector: dict[str, str], widget: dict[str, Any]) -> bool:
    keys = [k for k in _SELECTOR_KEYS if selector.get(k)]
    if not keys:
        return False
    return all(canonical_text(selector[k]) == canonical_text(widget.get(k, "")) for k in keys)


def _check_widget_spec(spec: dict[str, Any]) -> None:
    if not any((spec.get(k) or "").strip() for k in _SELECTOR_KEYS) and not spec.get("class"):
        raise InvalidValue(f"widget spec without attributes: {spec!r}")
    Bounds.from_list(spec["bounds"])
    for op in spec.get("ops", ()):
        ActionKind(op)


@dataclass
class Gesture:
    """What the backend was asked to do, kept for inspection in tests."""

    action: ActionKind
    start: tuple[int, int] | None
    end: tuple[int, int] | None
    text: str | None


class SimulatedApp:
    def __init__(self, model: dict[str, Any]):
        self.model = model
        self.app_id: str = model.get("app", "simulated")
        self.initial: str = model["initial"]
        self.states: dict[str, list[dict[str, Any]]] = model["states"]
        self.transitions: list[dict[str, Any]] = model.get("transitions", [])
        self.validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "SimulatedApp":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def validate(self) -> None:
        if self.initial not in self.states:
            raise InvalidValue(f"initial state {self.initial!r} is not defined")
        reachable: dict[str, list[dict[str, Any]]] = {name: list(ws) for name, ws in self.states.items()}
        for ws in self.states.values():
            for w in ws:
                _check_widget_spec(w)
        for t in self.transitions:
            for end in ("from", "to"):
                if t[end] not in self.states:
                    raise InvalidValue(f"transition refers to unknown state {t[end]!r}")
            ActionKind(t["on"]["action"])
            for eff in t.get("effects", ()):
                target = eff.get("state", t["to"])
                if target not in self.states:
                    raise InvalidValue(f"effect refers to unknown state {target!r}")
                for w in eff.get("add", ()):
                    _check_widget_spec(w)
                    reachable[target].append(w)
        for t in self.transitions:
            sel = t["on"].get("widget")
            if sel is None:
                continue
            if not any(selector_matches(sel, w) for w in reachable[t["from"]]):
                raise InvalidValue(f"selector {sel!r} matches no widget in state {t['from']!r}")


class SimulatorBackend:
    """DeviceBackend over a SimulatedApp; ``reset`` returns to the initial screen."""

    settle_seconds = 0.0

    def __init__(self, app: SimulatedApp):
        self.app = app
        self.gestures: list[Gesture] = []
        self.reset()

    @classmethod
    def from_file(cls, path: str | Path) -> "SimulatorBackend":
        return cls(SimulatedApp.from_file(path))

    def reset(self) -> None:
        self.current = self.app.initial
        self.screens = {name: copy.deepcopy(ws) for name, ws in self.app.states.items()}
        self.fields: dict[str, str] = {}
        self.gestures.clear()

    # DeviceBackend protocol

    def current_app(self) -> str:
        return self.app.app_id

    def _raw(self, spec: dict[str, Any]) -> RawWidget:
        return RawWidget(
            text=spec.get("text", "") or "",
            content_desc=spec.get("content_desc", "") or "",
            resource_id=spec.get("resource_id", "") or "",
            class_name=spec.get("class", "") or "",
            bounds=Bounds.from_list(spec["bounds"]),
            ops=frozenset(ActionKind(o) for o in spec.get("ops", ())),
        )

    def dump_hierarchy(self) -> Dump:
        widgets = tuple(self._raw(s) for s in self.screens[self.current])
        return Dump(widgets, render_hierarchy(widgets, self.app.app_id))

    def screenshot(self) -> bytes | None:
        return None

    def _locate(self, target: RawWidget) -> dict[str, Any]:
        for spec in self.screens[self.current]:
            if self._raw(spec) == target:
                return spec
        raise StaleWidget(f"widget {target.text or target.content_desc or target.resource_id!r} is not on screen")

    def perform(
        self,
        action: ActionKind,
        target: RawWidget | None,
        text: str | None = None,
        start: tuple[int, int] | None = None,
        end: tuple[int, int] | None = None,
    ) -> None:
        action = ActionKind(action)
        self.gestures.append(Gesture(action, start, end, text))
        spec = None
        if action is not ActionKind.BACK:
            if target is None:
                raise StaleWidget(f"{action.value} needs a target widget")
            spec = self._locate(target)
            if action not in {ActionKind(o) for o in spec.get("ops", ())}:
                raise ActionUnsupported(f"{action.value} not supported by {target.resource_id or target.text!r}")
            if action is ActionKind.EDIT:
                spec["text"] = text or ""
                if spec.get("resource_id"):
                    self.fields[spec["resource_id"]] = text or ""
        for t in self.app.transitions:
            if self._fires(t, action, spec, text):
                self._apply(t)
                return

    def _fires(self, t: dict[str, Any], action: ActionKind, spec: dict | None, text: str | None) -> bool:
        on = t["on"]
        if t["from"] != self.current or ActionKind(on["action"]) is not action:
            return False
        if on.get("widget") is not None and (spec is None or not selector_matches(on["widget"], spec)):
            return False
        if "value" in on and canonical_text(on["value"]) != canonical_text(text):
            return False
        return True

    def _substitute(self, spec: dict[str, Any]) -> dict[str, Any]:
        spec = copy.deepcopy(spec)
        for key in _SELECTOR_KEYS:
            if spec.get(key):
                spec[key] = _FIELD.sub(lambda m: self.fields.get(m.group(1), ""), spec[key])
        return spec

    def _apply(self, t: dict[str, Any]) -> None:
        for eff in t.get("effects", ()):
            screen = self.screens[eff.get("state", t["to"])]
            for sel in eff.get("remove", ()):
                screen[:] = [w for w in screen if not selector_matches(self._substitute(sel), w)]
            for w in eff.get("add", ()):
                screen.append(self._substitute(w))
        self.current = t["to"]
