"""Functional test dataset: summaries, embeddings, persistence and retrieval.

Entries are keyed first by app category and then by the embedding of their
functional summary; retrieval is an exhaustive cosine scan over the category.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

from .errors import (
    DimensionMismatch,
    EmbeddingDimensionMismatch,
    EmptyText,
    ProviderUnavailable,
    SummaryRejected,
    UnknownCategory,
    ZeroVector,
)
from .llm import LLMSession
from .model import TestCase
from .prompts import PromptRole, render_prompt, with_feedback

logger = logging.getLogger(__name__)

ENTRIES_FILE = "entries.jsonl"
META_FILE = "store.meta.json"
DEFAULT_DIMENSION = 256
MAX_SUMMARY_WORDS = 20
SUMMARY_ROUNDS = 3
# scores closer than this are ties and fall back to insertion order
SCORE_DECIMALS = 12


class Embedder(Protocol):
    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector("cannot normalise a zero vector")
    return vec / norm


class HashingEmbedder:
    """Hashed bag of lowercase word tokens, L2-normalised."""

    name = "deterministic"

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9]+", (text or "").lower())
        if not tokens:
            raise EmptyText(f"nothing to embed in {text!r}")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokens:
            vec[self.bucket(tok)] += 1.0
        return _normalize(vec)


class HttpEmbedder:
    """Remote sentence-embedding service: POST ``{"input": text}`` -> ``{"embedding": [...]}``."""

    def __init__(self, url: str, dimension: int | None = None, timeout: float = 60.0):
        self.url = url
        self.name = f"http:{url}"
        self.dimension = dimension
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("empty text")
        try:
            resp = requests.post(self.url, json={"input": text}, timeout=self.timeout)
            resp.raise_for_status()
            vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise ProviderUnavailable(f"embedding service failed: {exc}") from exc
        if self.dimension is None:
            self.dimension = int(vec.shape[0])
        elif vec.shape[0] != self.dimension:
            raise EmbeddingDimensionMismatch(f"expected {self.dimension}, service returned {vec.shape[0]}")
        return _normalize(vec)


def embedder_from_spec(spec: str | None, dimension: int | None = None) -> Embedder:
    if spec in (None, "", "deterministic"):
        return HashingEmbedder(dimension or DEFAULT_DIMENSION)
    if spec.startswith(("http://", "https://")):
        return HttpEmbedder(spec, dimension)
    if spec.startswith("http:"):
        return HttpEmbedder(spec[len("http:"):], dimension)
    raise ValueError(f"unrecognised embedder {spec!r}")


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    va, vb = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"{va.shape} vs {vb.shape}")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return max(-1.0, min(1.0, float(va @ vb) / (na * nb)))


_TERMINATOR = re.compile(r"[.!?]+")
_TECHNICAL = re.compile(
    r"```|xpath|//\w|\[@|resource[-_]id|content[-_]desc|\bbounds\s*=|\bclass\s*=|driver\.", re.IGNORECASE
)


def summary_valid(summary: str) -> list[str]:
    """Return the violated criteria; an empty list means the summary is acceptable."""
    text = (summary or "").strip()
    if not text:
        return ["empty"]
    violations = []
    body = text.rstrip(".!?").rstrip()
    if "\n" in body or _TERMINATOR.search(body):
        violations.append("multi_sentence")
    if len(text.split()) > MAX_SUMMARY_WORDS:
        violations.append("too_long")
    if _TECHNICAL.search(text):
        violations.append("technical_terms")
    return violations


_FEEDBACK = {
    "empty": "The summary was empty.",
    "multi_sentence": "Write exactly one sentence.",
    "too_long": f"Use at most {MAX_SUMMARY_WORDS} words: the subject, verb, and object.",
    "technical_terms": "Use natural English only; no code, XPath or widget attribute names.",
}


def _clean_summary(reply: str) -> str:
    text = reply.strip()
    text = re.sub(r"^functional summary\s*:\s*", "", text, flags=re.IGNORECASE)
    return text.strip().strip('"').strip()


def generate_functional_summary(case: TestCase, category: str, session: LLMSession, rounds: int = SUMMARY_ROUNDS) -> str:
    base = render_prompt(PromptRole.SUMMARY_GENERATION, {"case": case, "category": category})
    prompt = base
    violations: list[str] = []
    summary = ""
    for _ in range(rounds):
        summary = _clean_summary(session.ask(PromptRole.SUMMARY_GENERATION, prompt))
        violations = summary_valid(summary)
        if not violations:
            return summary
        prompt = with_feedback(base, summary, [_FEEDBACK[v] for v in violations])
    raise SummaryRejected(violations, summary)


def category_key(category: str) -> str:
    return " ".join(category.split()).casefold()


@dataclass(frozen=True)
class KnowledgeEntry:
    category: str
    summary: str
    embedding: tuple[float, ...]
    app_id: str
    case: TestCase

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "summary": self.summary,
            "embedding": list(self.embedding),
            "app_id": self.app_id,
            "case": self.case.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeEntry":
        return cls(
            category=data["category"],
            summary=data["summary"],
            embedding=tuple(float(x) for x in data["embedding"]),
            app_id=data["app_id"],
            case=TestCase.from_dict(data["case"]),
        )


@dataclass(frozen=True)
class RetrievalResult:
    entry: KnowledgeEntry
    score: float


class KnowledgeStore:
    """In-memory index mirrored to ``entries.jsonl`` + ``store.meta.json``."""

    def __init__(self, directory: str | Path | None = None, embedder: Embedder | None = None, categories: Iterable[str] = ()):
        self.directory = Path(directory) if directory is not None else None
        self.embedder = embedder or HashingEmbedder()
        self.dimension = self.embedder.dimension
        self.categories: list[str] = []
        self.entries: list[KnowledgeEntry] = []
        self._matrix = np.zeros((0, self.dimension or 0))
        self._lock = threading.RLock()
        for c in categories:
            self.register_category(c)

    # persistence

    @classmethod
    def load(cls, directory: str | Path, embedder: Embedder | None = None) -> "KnowledgeStore":
        directory = Path(directory)
        meta = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
        if embedder is None:
            embedder = embedder_from_spec(meta.get("embedder"), meta["dimension"])
        if embedder.dimension != meta["dimension"]:
            raise EmbeddingDimensionMismatch(f"store has dimension {meta['dimension']}, embedder {embedder.dimension}")
        store = cls(None, embedder, meta.get("categories", ()))
        path = directory / ENTRIES_FILE
        if path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    store._append(KnowledgeEntry.from_dict(json.loads(line)))
        store.directory = directory
        return store

    def _write_meta(self) -> None:
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        meta = {"dimension": self.dimension, "embedder": self.embedder.name, "categories": self.categories}
        (self.directory / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    def save(self, directory: str | Path | None = None) -> None:
        """Rewrite both files from memory (``add`` already appends incrementally)."""
        with self._lock:
            if directory is not None:
                self.directory = Path(directory)
            self._write_meta()
            with (self.directory / ENTRIES_FILE).open("w", encoding="utf-8") as fh:
                for e in self.entries:
                    fh.write(json.dumps(e.to_dict()) + "\n")

    # writing

    def register_category(self, category: str) -> str:
        with self._lock:
            for known in self.categories:
                if category_key(known) == category_key(category):
                    return known
            self.categories.append(category)
            self._write_meta()
            return category

    def _append(self, entry: KnowledgeEntry) -> None:
        vec = np.asarray(entry.embedding, dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise EmbeddingDimensionMismatch(f"entry has dimension {vec.shape[0]}, store {self.dimension}")
        if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-6:
            raise ValueError("entry embedding is not unit-norm")
        if self._resolve_category(entry.category) is None:
            raise UnknownCategory(entry.category)
        self.entries.append(entry)
        self._matrix = np.vstack([self._matrix.reshape(-1, self.dimension), vec[None, :]])

    def add(self, entry: KnowledgeEntry) -> KnowledgeEntry:
        with self._lock:
            self._append(entry)
            if self.directory is not None:
                if not (self.directory / META_FILE).exists():
                    self._write_meta()
                with (self.directory / ENTRIES_FILE).open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.to_dict()) + "\n")
        return entry

    def add_summarized(self, case: TestCase, summary: str) -> KnowledgeEntry:
        problems = summary_valid(summary)
        if problems:
            raise SummaryRejected(problems, summary)
        category = self.register_category(case.category)
        vec = self.embed(summary)
        return self.add(KnowledgeEntry(category, summary, tuple(float(x) for x in vec), case.app_id, case))

    def ingest(self, case: TestCase, session: LLMSession) -> KnowledgeEntry:
        """Summarise ``case`` with the model, embed the summary and persist the entry."""
        summary = generate_functional_summary(case, case.category, session)
        return self.add_summarized(case, summary)

    # reading

    def embed(self, text: str) -> np.ndarray:
        vec = self.embedder.embed(text)
        if vec.shape != (self.dimension,):
            raise EmbeddingDimensionMismatch(f"embedder returned {vec.shape[0]}, store expects {self.dimension}")
        return vec

    def _resolve_category(self, category: str) -> str | None:
        for known in self.categories:
            if category_key(known) == category_key(category):
                return known
        return None

    def category_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.categories}
        for e in self.entries:
            counts[e.category] += 1
        return counts

    def __len__(self) -> int:
        return len(self.entries)

    def retrieve(
        self, requirement: str, category: str | None, exclude_app: str | None = None, top_sim: int = 3
    ) -> list[RetrievalResult]:
        """Top ``top_sim`` entries by cosine score within ``category`` (``None`` = all).

        Raises UnknownCategory for a category the store has never seen, so callers
        can fall back to an all-category search.
        """
        if top_sim < 1:
            raise ValueError("top_sim must be positive")
        with self._lock:
            if not self.entries:
                return []
            wanted = None
            if category is not None:
                wanted = self._resolve_category(category)
                if wanted is None:
                    raise UnknownCategory(category)
            candidates = [
                i
                for i, e in enumerate(self.entries)
                if (wanted is None or e.category == wanted) and (exclude_app is None or e.app_id != exclude_app)
            ]
            if not candidates:
                return []
            query = self.embed(requirement)
            scores = self._matrix[candidates] @ query
        ranked = sorted(zip(candidates, scores), key=lambda cs: (-round(float(cs[1]), SCORE_DECIMALS), cs[0]))
        return [
            RetrievalResult(self.entries[i], max(-1.0, min(1.0, float(s)))) for i, s in ranked[:top_sim]
        ]


def load_cases(path: str | Path) -> list[tuple[str, TestCase, dict]]:
    """Read canonical case files from a directory (or one file).

    Returns ``(case_id, case, raw_document)`` triples sorted by file name.
    """
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    out = []
    for f in files:
        doc = json.loads(f.read_text(encoding="utf-8"))
        out.append((f.stem, TestCase.from_dict(doc), doc))
    return out


def build_store(
    cases_dir: str | Path, out_dir: str | Path, embedder: Embedder, session: LLMSession | None = None
) -> KnowledgeStore:
    """Ingest every case file; a precomputed ``"summary"`` field skips the model call."""
    store = KnowledgeStore(out_dir, embedder)
    store._write_meta()
    for case_id, case, doc in load_cases(cases_dir):
        if doc.get("summary"):
            store.add_summarized(case, doc["summary"])
        elif session is not None:
            store.ingest(case, session)
        else:
            raise ValueError(f"case {case_id} has no summary and no LLM was configured")
        logger.info("ingested %s (%s)", case_id, case.category)
    return store


def brute_force_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Plain-Python cosine, kept apart from the numpy path for cross-checking."""
    dot = math.fsum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(math.fsum(x * x for x in a)) * math.sqrt(math.fsum(y * y for y in b)))
