"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class LogiDroidError(Exception):
    """Base class for all errors raised by the package."""


class InvalidValue(LogiDroidError, ValueError):
    """A domain value violates one of its invariants."""


# knowledge store


class SummaryRejected(LogiDroidError):
    def __init__(self, violations: list[str], last_reply: str = ""):
        super().__init__(f"summary rejected: {', '.join(violations)}")
        self.violations = violations
        self.last_reply = last_reply


class EmbeddingDimensionMismatch(LogiDroidError):
    pass


class EmptyText(LogiDroidError, ValueError):
    pass


class DimensionMismatch(LogiDroidError, ValueError):
    pass


class ZeroVector(LogiDroidError, ValueError):
    pass


class UnknownCategory(LogiDroidError, KeyError):
    def __init__(self, category: str):
        super().__init__(category)
        self.category = category

    def __str__(self) -> str:
        return f"unknown category: {self.category!r}"


# llm gateway


class ProviderUnavailable(LogiDroidError):
    pass


class ScriptExhausted(LogiDroidError):
    def __init__(self, role: str, turn: int):
        super().__init__(f"no scripted reply for role={role} turn={turn}")
        self.role = role
        self.turn = turn


class MissingContextField(LogiDroidError, KeyError):
    def __init__(self, role: str, field: str):
        super().__init__(f"{role} prompt requires context field {field!r}")
        self.role = role
        self.field = field

    def __str__(self) -> str:
        return self.args[0]


# fusion


class FusionRejected(LogiDroidError):
    def __init__(self, violations: list, rounds: int):
        super().__init__(f"fusion output rejected after {rounds} rounds")
        self.violations = violations
        self.rounds = rounds


# device


class BackendUnavailable(LogiDroidError):
    pass


class EmptyScreen(LogiDroidError):
    pass


class StaleWidget(LogiDroidError):
    pass


class ActionUnsupported(LogiDroidError):
    pass


class AssertionTargetUnresolved(LogiDroidError):
    pass


class EmptySession(LogiDroidError):
    pass


# decision agent


class UnparseableReply(LogiDroidError):
    def __init__(self, role: str, reply: str):
        super().__init__(f"could not parse {role} reply: {reply!r}")
        self.role = role
        self.reply = reply


class InvalidWidgetId(LogiDroidError):
    pass


class StepFailed(LogiDroidError):
    pass


class SessionAborted(LogiDroidError):
    def __init__(self, reason: str, *, history=None, report=None):
        super().__init__(reason)
        self.reason = reason
        self.history = history
        self.report = report


# evaluation


class NoAnnotations(LogiDroidError):
    pass


# orchestration


class PipelineError(LogiDroidError):
    """Wraps a stage failure with the pipeline phase that raised it."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause
