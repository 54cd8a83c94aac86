"""Generated-vs-ground-truth metrics: exact perfect match and an essential-step proxy.

The essential-step rate stands in for a human judgment of whether a case tests the
target functionality; reports label it ``proxy``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from .errors import NoAnnotations
from .model import ActionKind, StepKind, TestCase, steps_equal


class Verdict(str, Enum):
    PERFECT = "perfect"
    ESSENTIAL_ONLY = "essential_only"
    FAIL = "fail"


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    first_divergence: int | None

    def __bool__(self) -> bool:
        return self.matched


def perfect_match(generated: TestCase, ground_truth: TestCase) -> MatchResult:
    """Equal length and pairwise ``steps_equal``; otherwise the first index that differs."""
    for i, (g, t) in enumerate(zip(generated.steps, ground_truth.steps)):
        if not steps_equal(g, t):
            return MatchResult(False, i)
    if len(generated.steps) != len(ground_truth.steps):
        return MatchResult(False, min(len(generated.steps), len(ground_truth.steps)))
    return MatchResult(True, None)


def default_essential(case: TestCase) -> list[int]:
    """All assertions and all edit events; every step when there are neither."""
    marked = [i for i, s in enumerate(case.steps) if s.kind is StepKind.ASSERTION or s.action is ActionKind.EDIT]
    return marked or list(range(len(case.steps)))


def essential_coverage(generated: TestCase, ground_truth: TestCase, essential: Sequence[int] | None = None) -> bool:
    """Every essential ground-truth step matched in ``generated``, in the same relative order."""
    idx = default_essential(ground_truth) if essential is None else sorted(set(essential))
    if not idx:
        raise NoAnnotations("no essential steps are marked")
    if any(not 0 <= i < len(ground_truth.steps) for i in idx):
        raise ValueError(f"essential index out of range: {idx}")
    wanted = [ground_truth.steps[i] for i in idx]
    k = 0
    # greedy earliest matching is optimal for subsequence tests
    for step in generated.steps:
        if k < len(wanted) and steps_equal(step, wanted[k]):
            k += 1
    return k == len(wanted)


@dataclass(frozen=True)
class AnnotatedCase:
    case_id: str
    case: TestCase
    essential: tuple[int, ...] | None = None


@dataclass
class CaseVerdict:
    case_id: str
    verdict: Verdict
    first_divergence: int | None

    def to_dict(self) -> dict[str, Any]:
        return {"case_id": self.case_id, "verdict": self.verdict.value, "first_divergence": self.first_divergence}


def _rate(num: int, den: int) -> float:
    return float(Fraction(num, den)) if den else 0.0


@dataclass
class EvalReport:
    total: int
    perfect: int
    essential_pass: int
    per_case: list[CaseVerdict] = field(default_factory=list)

    @property
    def perfect_rate(self) -> float:
        return _rate(self.perfect, self.total)

    @property
    def essential_rate(self) -> float:
        return _rate(self.essential_pass, self.total)

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "perfect": self.perfect,
            "perfect_rate": self.perfect_rate,
            "essential_pass": self.essential_pass,
            "essential_rate": self.essential_rate,
            "essential_rate_kind": "proxy",
            "per_case": [c.to_dict() for c in self.per_case],
        }

    @classmethod
    def from_cases(cls, per_case: Sequence[CaseVerdict]) -> "EvalReport":
        per_case = sorted(per_case, key=lambda c: c.case_id)
        perfect = sum(c.verdict is Verdict.PERFECT for c in per_case)
        essential = sum(c.verdict is not Verdict.FAIL for c in per_case)
        return cls(len(per_case), perfect, essential, list(per_case))


def evaluate_pair(case_id: str, generated: TestCase | None, truth: AnnotatedCase) -> CaseVerdict:
    if generated is None:  # the run produced no case
        return CaseVerdict(case_id, Verdict.FAIL, 0)
    match = perfect_match(generated, truth.case)
    if match:
        return CaseVerdict(case_id, Verdict.PERFECT, None)
    if essential_coverage(generated, truth.case, truth.essential):
        return CaseVerdict(case_id, Verdict.ESSENTIAL_ONLY, match.first_divergence)
    return CaseVerdict(case_id, Verdict.FAIL, match.first_divergence)


def evaluate_corpus(pairs: Sequence[tuple[TestCase | None, AnnotatedCase]]) -> EvalReport:
    if not pairs:
        raise ValueError("nothing to evaluate")
    return EvalReport.from_cases([evaluate_pair(truth.case_id, gen, truth) for gen, truth in pairs])


# file handling for the CLI


def _read_case(path: Path) -> TestCase:
    return TestCase.from_dict(json.loads(path.read_text(encoding="utf-8")))


def collect_cases(path: str | Path) -> dict[str, TestCase]:
    """Case files keyed by id: ``<id>.json`` in a directory, ``<id>/case.json`` run dirs, or one file."""
    path = Path(path)
    if path.is_file():
        return {path.stem if path.name != "case.json" else path.parent.name: _read_case(path)}
    out: dict[str, TestCase] = {}
    for f in sorted(path.glob("*.json")):
        out[f.stem] = _read_case(f)
    for f in sorted(path.glob("*/case.json")):
        out.setdefault(f.parent.name, _read_case(f))
    return out


def load_annotations(path: str | Path | None) -> dict[str, tuple[int, ...]]:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {cid: tuple(int(i) for i in entry["essential"]) for cid, entry in data.items()}


def pair_up(
    generated: dict[str, TestCase], truth: dict[str, TestCase], annotations: dict[str, tuple[int, ...]]
) -> list[tuple[TestCase | None, AnnotatedCase]]:
    """Match by case id; a ground-truth case with no generated counterpart is scored as a failure."""
    if len(generated) == 1 and len(truth) == 1:
        (gen,), (cid,) = generated.values(), truth.keys()
        return [(gen, AnnotatedCase(cid, truth[cid], annotations.get(cid)))]
    return [(generated.get(cid), AnnotatedCase(cid, truth[cid], annotations.get(cid))) for cid in sorted(truth)]
