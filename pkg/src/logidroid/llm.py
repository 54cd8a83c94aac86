"""Model gateway: providers, request/response records and transcript logging.

All model traffic passes through :func:`complete`, which retries transport
failures, and :class:`LLMSession`, which numbers turns and logs every exchange
before handing the reply back.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

import requests

from .errors import ProviderUnavailable, ScriptExhausted, SessionAborted
from .prompts import PromptRole

logger = logging.getLogger(__name__)

TOKEN_ENV = "LOGIDROID_LLM_TOKEN"
DEFAULT_RETRIES = 2


@dataclass(frozen=True)
class ChatRequest:
    role: PromptRole
    rendered_prompt: str
    session_id: str
    turn: int

    def __post_init__(self):
        object.__setattr__(self, "role", PromptRole(self.role))
        if not self.rendered_prompt:
            raise ValueError("rendered_prompt must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider_id: str


class Provider(Protocol):
    provider_id: str

    def reply(self, request: ChatRequest) -> str: ...


class ScriptedProvider:
    """Deterministic provider replaying a ScriptedTranscript.

    Entries look like ``{"match": {"role": ..., "turn": 3}, "reply": ...}`` or
    ``{"match": {"role": ..., "contains": "..."}, "reply": ...}``. An entry whose match
    names only a role answers the next request of that role. Each entry is used once;
    the first unconsumed entry that matches wins.
    """

    provider_id = "scripted"

    def __init__(self, entries: list[dict[str, Any]]):
        self.entries = [self._check(e) for e in entries]
        self._used = [False] * len(self.entries)
        self._lock = threading.Lock()

    @staticmethod
    def _check(entry: dict[str, Any]) -> dict[str, Any]:
        match = entry.get("match")
        if not isinstance(match, dict) or "role" not in match or "reply" not in entry:
            raise ValueError(f"malformed transcript entry: {entry!r}")
        PromptRole(match["role"])
        return entry

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        path = Path(path)
        if path.suffix == ".jsonl":
            return cls.from_log(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data["entries"]
        return cls(data)

    @classmethod
    def from_log(cls, path: str | Path) -> "ScriptedProvider":
        """Build a replay script from a recorded ``transcript.jsonl``."""
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            entries.append(
                {"match": {"role": rec["role"], "turn": rec["turn"], "session": rec["session_id"]}, "reply": rec["reply"]}
            )
        return cls(entries)

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def _matches(self, match: dict[str, Any], request: ChatRequest) -> bool:
        if PromptRole(match["role"]) is not request.role:
            return False
        if "session" in match and match["session"] != request.session_id:
            return False
        if "turn" in match and int(match["turn"]) != request.turn:
            return False
        if "contains" in match and match["contains"] not in request.rendered_prompt:
            return False
        return True

    def reply(self, request: ChatRequest) -> str:
        with self._lock:
            for i, entry in enumerate(self.entries):
                if not self._used[i] and self._matches(entry["match"], request):
                    self._used[i] = True
                    return entry["reply"]
        raise ScriptExhausted(request.role.value, request.turn)


class HttpProvider:
    """POSTs ``{"prompt": ...}`` to an endpoint with bearer auth from the environment."""

    def __init__(self, url: str, token: str | None = None, timeout: float = 120.0, params: dict | None = None):
        self.url = url
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.params = dict(params or {})
        self.provider_id = f"http:{url}"

    def reply(self, request: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                self.url, json={"prompt": request.rendered_prompt, **self.params}, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise ProviderUnavailable(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            return resp.text
        if isinstance(body, str):
            return body
        for key in ("text", "reply", "completion", "content", "output"):
            if isinstance(body.get(key), str):
                return body[key]
        raise ProviderUnavailable(f"response carries no text field: {sorted(body)}")


def provider_from_spec(spec: str) -> Provider:
    """``scripted:<file>`` or ``http:<url>``."""
    if spec.startswith("scripted:"):
        return ScriptedProvider.from_file(spec[len("scripted:"):])
    if spec.startswith(("http://", "https://")):
        return HttpProvider(spec)
    if spec.startswith("http:"):
        return HttpProvider(spec[len("http:"):])
    raise ValueError(f"unrecognised LLM spec {spec!r} (expected scripted:<file> or http:<url>)")


class TranscriptLog:
    """Append-only request/response log, optionally mirrored to a JSONL file."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[tuple[ChatRequest, ChatResponse]] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def append(self, request: ChatRequest, response: ChatResponse) -> None:
        with self._lock:
            self.records.append((request, response))
            if self.path is not None:
                rec = {
                    "session_id": request.session_id,
                    "turn": request.turn,
                    "role": request.role.value,
                    "prompt": request.rendered_prompt,
                    "reply": response.text,
                    "provider_id": response.provider_id,
                }
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self.records)


def complete(
    request: ChatRequest, provider: Provider, log: TranscriptLog | None = None, retries: int = DEFAULT_RETRIES
) -> ChatResponse:
    attempt = 0
    while True:
        try:
            text = provider.reply(request)
            break
        except ProviderUnavailable as exc:
            if attempt >= retries:
                raise
            attempt += 1
            logger.warning("provider failure on %s turn %d (retry %d): %s", request.role.value, request.turn, attempt, exc)
    response = ChatResponse(text=text, provider_id=provider.provider_id)
    if log is not None:
        log.append(request, response)
    return response


class LLMSession:
    """One conversation: strictly increasing turns, optional hard cap on calls."""

    def __init__(
        self,
        provider: Provider,
        log: TranscriptLog | None = None,
        session_id: str | None = None,
        budget: int | None = None,
        retries: int = DEFAULT_RETRIES,
    ):
        self.provider = provider
        self.log = log if log is not None else TranscriptLog()
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.budget = budget
        self.retries = retries
        self.turn = 0
        self.calls_by_role: dict[PromptRole, int] = {}

    @property
    def calls(self) -> int:
        return self.turn

    def budget_left(self) -> int | None:
        return None if self.budget is None else self.budget - self.turn

    def ask(self, role: PromptRole | str, prompt: str) -> str:
        role = PromptRole(role)
        if self.budget is not None and self.turn >= self.budget:
            raise SessionAborted(f"provider-call budget of {self.budget} exhausted")
        self.turn += 1
        self.calls_by_role[role] = self.calls_by_role.get(role, 0) + 1
        request = ChatRequest(role, prompt, self.session_id, self.turn)
        return complete(request, self.provider, self.log, self.retries).text
