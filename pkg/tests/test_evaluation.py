import json
import random

import pytest
from hypothesis import given

from logidroid.errors import NoAnnotations
from logidroid.evaluation import (
    AnnotatedCase,
    Verdict,
    collect_cases,
    default_essential,
    essential_coverage,
    evaluate_corpus,
    evaluate_pair,
    load_annotations,
    pair_up,
    perfect_match,
)
from logidroid.model import TestCase, TestStep, WidgetPattern
from strategies import cases


def click(name):
    return TestStep.event("click", WidgetPattern(text=name))


def case(*steps):
    return TestCase("a.app", "To-Do", tuple(steps))


class TestPerfectMatch:
    def test_equal(self, ground_truth):
        assert perfect_match(ground_truth, ground_truth).matched

    def test_first_divergence(self, ground_truth):
        altered = case(*ground_truth.steps[:2], click("something else"), *ground_truth.steps[3:])
        assert perfect_match(altered, ground_truth).first_divergence == 2

    def test_length_mismatch(self, ground_truth):
        r = perfect_match(case(*ground_truth.steps[:4]), ground_truth)
        assert not r and r.first_divergence == 4

    def test_attribute_overlap_is_enough(self):
        a = case(TestStep.event("click", WidgetPattern(text="Add", resource_id="x")))
        b = case(TestStep.event("click", WidgetPattern(content_desc="plus", resource_id="X ")))
        assert perfect_match(a, b)


class TestEssential:
    def test_default_marks_assertions_and_edits(self, ground_truth):
        assert default_essential(ground_truth) == [1, 3, 5]

    def test_default_falls_back_to_all(self):
        assert default_essential(case(click("a"), click("b"))) == [0, 1]

    def test_subsequence_with_extra_steps(self):
        gt = case(click("a"), click("b"), click("c"))
        gen = case(click("x"), click("a"), click("y"), click("c"))
        assert essential_coverage(gen, gt, [0, 2])
        assert not essential_coverage(gen, gt, [0, 1])

    def test_order_matters(self):
        gt = case(click("a"), click("b"))
        assert not essential_coverage(case(click("b"), click("a")), gt, [0, 1])

    def test_empty_annotation(self):
        with pytest.raises(NoAnnotations):
            essential_coverage(case(click("a")), case(click("a")), [])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            essential_coverage(case(click("a")), case(click("a")), [3])

    @given(cases(), cases())
    def test_perfect_implies_essential(self, a, b):
        if perfect_match(a, b):
            assert essential_coverage(a, b)


class TestCorpus:
    def test_four_of_ten(self):
        gt = case(click("a"), click("b"))
        pairs = []
        for i in range(10):
            gen = gt if i < 4 else (case(click("a"), click("z"), click("b")) if i < 7 else case(click("q")))
            pairs.append((gen, AnnotatedCase(f"c{i:02d}", gt, (0, 1))))
        report = evaluate_corpus(pairs)
        assert report.perfect_rate == 0.4 and report.essential_rate == 0.7
        d = report.to_dict()
        assert d["essential_rate_kind"] == "proxy" and d["total"] == 10
        assert [c.case_id for c in report.per_case] == sorted(c.case_id for c in report.per_case)

    def test_missing_generated_is_fail(self):
        gt = case(click("a"))
        assert evaluate_pair("x", None, AnnotatedCase("x", gt)).verdict is Verdict.FAIL

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            evaluate_corpus([])

    def test_randomized_implication(self):
        rng = random.Random(4)
        names = ["a", "b", "c"]
        for _ in range(1000):
            gt = case(*(click(rng.choice(names)) for _ in range(rng.randint(1, 4))))
            gen = case(*(click(rng.choice(names)) for _ in range(rng.randint(1, 4))))
            v = evaluate_pair("x", gen, AnnotatedCase("x", gt))
            if perfect_match(gen, gt):
                assert v.verdict is Verdict.PERFECT and essential_coverage(gen, gt)


class TestFiles:
    def test_collect_and_pair(self, tmp_path, ground_truth):
        gen_dir, gt_dir = tmp_path / "gen", tmp_path / "gt"
        gen_dir.mkdir(), gt_dir.mkdir()
        (gt_dir / "one.json").write_text(json.dumps(ground_truth.to_dict()))
        (gt_dir / "two.json").write_text(json.dumps(ground_truth.to_dict()))
        (gen_dir / "one").mkdir()
        (gen_dir / "one" / "case.json").write_text(json.dumps(ground_truth.to_dict()))
        ann = tmp_path / "ann.json"
        ann.write_text(json.dumps({"two": {"essential": [0]}}))
        pairs = pair_up(collect_cases(gen_dir), collect_cases(gt_dir), load_annotations(ann))
        report = evaluate_corpus(pairs)
        assert (report.total, report.perfect) == (2, 1)
        assert pairs[1][1].essential == (0,)
