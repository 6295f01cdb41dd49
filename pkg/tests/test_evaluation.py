from __future__ import annotations

import json
import random

import pytest

from evigraph.backends.base import CompareVerdict, KeypointJudgement
from evigraph.errors import DegenerateTally, EmptyDataset, LengthMismatch
from evigraph.evaluation import (
    Tally,
    accuracy_and_f1,
    advantage_score,
    compare_retrievers,
    evaluate_keypoints,
    keypoint_score,
    load_dataset,
)


def kp(covered: bool, contradicted: bool = False) -> KeypointJudgement:
    return KeypointJudgement("k", covered, contradicted)


class TestKeypointScore:
    def test_all_covered(self):
        assert keypoint_score([[kp(True), kp(True)], [kp(True)]]) == 1.0

    def test_hand_counted_four_sixths(self):
        # two samples with 4 and 2 keypoints; 3 and 1 covered
        verdicts = [
            [kp(True), kp(True), kp(True), kp(False)],
            [kp(True), kp(False)],
        ]
        assert keypoint_score(verdicts) == pytest.approx(4 / 6)

    def test_contradicted_excluded_from_numerator(self):
        verdicts = [[kp(True), KeypointJudgement("k", True, True)]]
        assert keypoint_score(verdicts) == 0.5

    def test_order_invariance(self):
        rng = random.Random(0)
        samples = [
            [kp(rng.random() < 0.5, rng.random() < 0.2) for _ in range(rng.randint(1, 6))]
            for _ in range(8)
        ]
        base = keypoint_score(samples)
        for _ in range(5):
            shuffled = [list(s) for s in samples]
            rng.shuffle(shuffled)
            for s in shuffled:
                rng.shuffle(s)
            assert keypoint_score(shuffled) == pytest.approx(base)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            keypoint_score([])


class TestAdvantageScore:
    def test_balanced_case_is_zero(self):
        # win == loss on both axes -> r = p = 0.5 -> a = 0, for any tie level
        for tie in (0.0, 0.2, 0.5):
            win = loss = (1 - tie) / 2
            r, p, a = advantage_score((win, tie, loss), (win, tie, loss))
            assert r == pytest.approx(0.5)
            assert p == pytest.approx(0.5)
            assert a == pytest.approx(0.0, abs=1e-12)

    def test_published_example_values(self):
        # the two spot-check rows called out with the formula
        _, _, a = advantage_score((0.692, 0.083, 0.224), (0.812, 0.031, 0.156))
        assert a * 100 == pytest.approx(58.8, abs=0.1)
        _, _, a = advantage_score((0.78, 0.18, 0.04), (0.95, 0.0, 0.05))
        assert a * 100 == pytest.approx(90.1, abs=0.1)

    def test_degenerate_tie(self):
        with pytest.raises(DegenerateTally):
            advantage_score((0.0, 1.0, 0.0), (0.5, 0.0, 0.5))

    def test_degenerate_zero_rp(self):
        with pytest.raises(DegenerateTally):
            advantage_score((0.0, 0.0, 1.0), (0.0, 0.0, 1.0))

    def test_matches_brute_force_on_random_tallies(self):
        rng = random.Random(42)
        for _ in range(500):
            def triple():
                w, t, l = rng.random(), rng.random(), rng.random()
                total = w + t + l
                return (w / total, t / total, l / total)

            recall, precision = triple(), triple()
            if recall[1] >= 0.999 or precision[1] >= 0.999:
                continue
            r, p, a = advantage_score(recall, precision)
            r_brute = recall[0] / (1 - recall[1])
            p_brute = precision[0] / (1 - precision[1])
            assert r == pytest.approx(r_brute, abs=1e-12)
            assert p == pytest.approx(p_brute, abs=1e-12)
            assert a == pytest.approx(4 * r_brute * p_brute / (r_brute + p_brute) - 1, abs=1e-12)
            # swapping win<->loss on both axes is itself formula-consistent
            r2, p2, a2 = advantage_score(
                (recall[2], recall[1], recall[0]), (precision[2], precision[1], precision[0])
            )
            assert r2 == pytest.approx(1 - r_brute, abs=1e-12)
            assert p2 == pytest.approx(1 - p_brute, abs=1e-12)


class TestCompareRetrievers:
    def dataset(self):
        return [
            {"id": i, "question": f"question {i}",
             "keypoints": [f"gold fact {i}"], "noise": [f"noise blob {i}"]}
            for i in range(20)
        ]

    def test_self_comparison_is_all_ties(self, mock_judge):
        retriever = lambda q: f"answer mentioning {q}"
        tally, report = compare_retrievers(self.dataset(), retriever, retriever,
                                           mock_judge, seed=1)
        assert tally.recall_tie == 20 and tally.precision_tie == 20
        with pytest.raises(DegenerateTally):
            tally.advantage()
        assert "advantage" not in report or report["tally"]["recall"]["tie"] == 20

    def test_gold_vs_noise_full_sweep(self, mock_judge):
        gold_retriever = lambda q: "gold fact " + q.split()[-1]
        noise_retriever = lambda q: "noise blob " + q.split()[-1]
        tally, report = compare_retrievers(self.dataset(), gold_retriever, noise_retriever,
                                           mock_judge, seed=3)
        assert tally.recall_win == 20 and tally.precision_win == 20
        r, p, a = tally.advantage()
        assert (r, p, a) == (1.0, 1.0, 1.0)
        assert report["advantage"]["a_x100"] == pytest.approx(100.0)

    def test_position_randomization_does_not_flip_outcomes(self, mock_judge):
        gold_retriever = lambda q: "gold fact " + q.split()[-1]
        noise_retriever = lambda q: "noise blob " + q.split()[-1]
        for seed in range(5):
            tally, report = compare_retrievers(self.dataset(), gold_retriever,
                                               noise_retriever, mock_judge, seed=seed)
            assert tally.recall_win == 20
            assert any(row["swapped"] for row in report["rows"])
            assert not all(row["swapped"] for row in report["rows"])

    def test_judge_failure_excluded_with_count(self):
        class FlakyJudge:
            def __init__(self):
                self.n = 0

            def judge(self, question, reference, candidate, rubric):
                self.n += 1
                if "question 7" in question:
                    raise RuntimeError("judge crashed")
                return CompareVerdict("tie")

        tally, report = compare_retrievers(self.dataset(), str, str, FlakyJudge(), seed=0)
        assert report["excluded"] == 1
        assert tally.samples == 19

    def test_empty_dataset(self, mock_judge):
        with pytest.raises(EmptyDataset):
            compare_retrievers([], str, str, mock_judge)


class TestAccuracyF1:
    def test_perfect(self):
        metrics = accuracy_and_f1(["a", "b"], ["a", "b"])
        assert metrics["accuracy"] == 1.0

    def test_all_positive_on_balanced_binary(self):
        gold = ["true", "false"] * 5
        predictions = ["true"] * 10
        metrics = accuracy_and_f1(predictions, gold)
        assert metrics["accuracy"] == 0.5
        assert metrics["f1"] == pytest.approx(2 / 3)

    def test_hand_computed_confusion_matrix(self):
        gold = ["true", "true", "false", "false", "true",
                "false", "true", "false", "true", "false"]
        pred = ["true", "false", "false", "true", "true",
                "false", "false", "false", "true", "true"]
        # tp=3 (1,5,9), fp=2 (4,10), fn=2 (2,7), tn=3 -> acc 6/10, f1 = 6/10
        metrics = accuracy_and_f1(pred, gold)
        assert metrics["accuracy"] == pytest.approx(0.6)
        assert metrics["f1"] == pytest.approx(2 * 3 / (2 * 3 + 2 + 2))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            accuracy_and_f1(["a"], ["a", "b"])


class TestEvaluateKeypoints:
    def test_judged_against_answers(self, mock_judge):
        dataset = [
            {"id": 1, "question": "q1", "keypoints": ["alpha point", "beta point"]},
            {"id": 2, "question": "q2", "keypoints": ["gamma point"]},
        ]
        answers = {"q1": "covers alpha point only", "q2": "covers gamma point"}
        report = evaluate_keypoints(dataset, lambda row: answers[row["question"]], mock_judge)
        assert report.score == pytest.approx(2 / 3)
        assert len(report.per_sample) == 2

    def test_duplicate_samples_judged_once(self):
        class CountingJudge:
            def __init__(self):
                self.calls = 0

            def judge(self, question, reference, candidate, rubric):
                self.calls += 1
                return [KeypointJudgement("alpha point", True, False)]

        judge = CountingJudge()
        row = {"id": 1, "question": "q1", "keypoints": ["alpha point"]}
        report = evaluate_keypoints([row, dict(row, id=2)], lambda r: "same answer", judge)
        assert judge.calls == 1  # cached by (question, candidate hash)
        assert report.score == 1.0

    def test_load_dataset(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": 1, "question": "q"}\n\n{"id": 2, "question": "r"}\n')
        rows = load_dataset(path)
        assert [r["id"] for r in rows] == [1, 2]

    def test_load_dataset_bad_json(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": 1}\nnot json\n')
        with pytest.raises(ValueError, match="line 2|:2"):
            load_dataset(path)


class TestTally:
    def test_proportions(self):
        tally = Tally(recall_win=6, recall_tie=2, recall_loss=2,
                      precision_win=5, precision_tie=0, precision_loss=5)
        assert tally.proportions("recall") == (0.6, 0.2, 0.2)
        r, p, a = tally.advantage()
        assert r == pytest.approx(0.75)
        assert p == pytest.approx(0.5)

    def test_no_samples(self):
        with pytest.raises(DegenerateTally):
            Tally().proportions("recall")
