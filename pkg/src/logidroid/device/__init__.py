"""Perception-interaction layer: backends, state perception, execution and synthesis."""

from .adb import AdbBackend
from .hierarchy import Dump, RawWidget, parse_hierarchy, render_hierarchy
from .session import (
    DeviceBackend,
    DeviceSession,
    HistoryEntry,
    SessionHistory,
    assertion_verdicts,
    backtrack_widget,
    build_state,
    check_assertion,
    describe_state,
    locate_in_history,
    replay_case,
    swipe_points,
    synthesize_case,
)
from .simulator import SimulatedApp, SimulatorBackend


def backend_from_spec(spec: str):
    """``sim:<app-model.json>`` (or a bare path) or ``adb:<serial>``."""
    if spec.startswith("adb:"):
        return AdbBackend(spec[len("adb:"):] or None)
    if spec.startswith("sim:"):
        spec = spec[len("sim:"):]
    return SimulatorBackend.from_file(spec)


__all__ = [
    "AdbBackend",
    "DeviceBackend",
    "DeviceSession",
    "Dump",
    "HistoryEntry",
    "RawWidget",
    "SessionHistory",
    "SimulatedApp",
    "SimulatorBackend",
    "assertion_verdicts",
    "backend_from_spec",
    "backtrack_widget",
    "build_state",
    "check_assertion",
    "describe_state",
    "locate_in_history",
    "parse_hierarchy",
    "render_hierarchy",
    "replay_case",
    "swipe_points",
    "synthesize_case",
]
