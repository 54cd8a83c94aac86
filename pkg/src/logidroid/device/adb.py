"""Real-device backend driving the Android Debug Bridge command-line tool."""

from __future__ import annotations

import logging
import re
import shutil
import subprocess

from ..errors import BackendUnavailable, StaleWidget
from ..model import ActionKind
from .hierarchy import Dump, RawWidget, parse_hierarchy

logger = logging.getLogger(__name__)

DUMP_PATH = "/sdcard/window_dump.xml"
SWIPE_MS = 300
_KEYCODE_BACK = 4


def escape_input_text(text: str) -> str:
    """Escape text for ``input text``: spaces become %s, shell metacharacters are quoted."""
    out = []
    for ch in text:
        if ch == " ":
            out.append("%s")
        elif ch in "\\\"'`$&|;<>()[]{}*?~#!%":
            out.append("\\" + ch)
        else:
            out.append(ch)
    return "".join(out)


class AdbBackend:
    settle_seconds = 0.5

    def __init__(self, serial: str | None = None, adb: str = "adb", timeout: float = 30.0):
        self.serial = serial
        self.adb = adb
        self.timeout = timeout
        self._last: tuple[RawWidget, ...] = ()

    def _cmd(self, *args: str) -> list[str]:
        base = [self.adb]
        if self.serial:
            base += ["-s", self.serial]
        return base + list(args)

    def _run(self, *args: str) -> bytes:
        if shutil.which(self.adb) is None:
            raise BackendUnavailable(f"{self.adb!r} not found on PATH")
        try:
            proc = subprocess.run(self._cmd(*args), capture_output=True, timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailable(str(exc)) from exc
        if proc.returncode != 0:
            raise BackendUnavailable(proc.stderr.decode(errors="replace").strip() or f"adb exited {proc.returncode}")
        return proc.stdout

    def current_app(self) -> str:
        out = self._run("shell", "dumpsys", "window").decode(errors="replace")
        m = re.search(r"mCurrentFocus=.*?\s([\w.]+)/", out)
        return m.group(1) if m else ""

    def dump_hierarchy(self) -> Dump:
        self._run("shell", "uiautomator", "dump", DUMP_PATH)
        raw = self._run("exec-out", "cat", DUMP_PATH).decode("utf-8", errors="replace")
        start = raw.find("<?xml")
        raw = raw[start:] if start >= 0 else raw
        widgets = tuple(parse_hierarchy(raw))
        self._last = widgets
        return Dump(widgets, raw)

    def screenshot(self) -> bytes | None:
        data = self._run("exec-out", "screencap", "-p")
        return data or None

    def perform(
        self,
        action: ActionKind,
        target: RawWidget | None,
        text: str | None = None,
        start: tuple[int, int] | None = None,
        end: tuple[int, int] | None = None,
    ) -> None:
        action = ActionKind(action)
        if action is ActionKind.BACK:
            self._run("shell", "input", "keyevent", str(_KEYCODE_BACK))
            return
        if target is None or target not in self._last:
            raise StaleWidget("target widget is not in the latest hierarchy dump")
        x, y = target.bounds.center
        if action is ActionKind.CLICK:
            self._run("shell", "input", "tap", str(x), str(y))
        elif action is ActionKind.EDIT:
            self._run("shell", "input", "tap", str(x), str(y))
            self._run("shell", "input", "text", escape_input_text(text or ""))
        else:
            (x1, y1), (x2, y2) = start, end
            self._run("shell", "input", "swipe", str(x1), str(y1), str(x2), str(y2), str(SWIPE_MS))
