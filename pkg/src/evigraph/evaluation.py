"""Retrieval and generation quality metrics.

Key-point coverage is the micro-average over every sample's reference key
points: a key point counts when the response covers it and does not
contradict it.  Pairwise retriever comparison judges each sample twice
(coverage axis and irrelevance axis) with the candidate order randomized to
cancel position bias, and aggregates win/tie/loss tallies into a combined
dominance score:

    r = win_r / (1 - tie_r),  p = win_p / (1 - tie_p),  a = 4rp / (r + p) - 1

``a`` is reported x100 in tables.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .backends.base import CompareVerdict, JudgeBackend, KeypointJudgement
from .errors import DegenerateTally, EmptyDataset, LengthMismatch

logger = logging.getLogger(__name__)

Retriever = Callable[[str], str]


@dataclass(frozen=True)
class KeyPointSet:
    question_id: str
    keypoints: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.keypoints:
            raise ValueError("keypoint list must be non-empty")


@dataclass
class Tally:
    """Win/tie/loss counts for the recall axis and the precision axis."""

    recall_win: int = 0
    recall_tie: int = 0
    recall_loss: int = 0
    precision_win: int = 0
    precision_tie: int = 0
    precision_loss: int = 0

    def add(self, axis: str, outcome: str) -> None:
        setattr(self, f"{axis}_{outcome}", getattr(self, f"{axis}_{outcome}") + 1)

    @property
    def samples(self) -> int:
        return self.recall_win + self.recall_tie + self.recall_loss

    def proportions(self, axis: str) -> tuple[float, float, float]:
        total = sum(getattr(self, f"{axis}_{o}") for o in ("win", "tie", "loss"))
        if total == 0:
            raise DegenerateTally(f"no samples on {axis} axis")
        return tuple(getattr(self, f"{axis}_{o}") / total for o in ("win", "tie", "loss"))

    def advantage(self) -> tuple[float, float, float]:
        return advantage_score(self.proportions("recall"), self.proportions("precision"))

    def to_dict(self) -> dict:
        return {
            "recall": {"win": self.recall_win, "tie": self.recall_tie, "loss": self.recall_loss},
            "precision": {
                "win": self.precision_win,
                "tie": self.precision_tie,
                "loss": self.precision_loss,
            },
        }


def keypoint_score(
    verdicts: Sequence[Sequence[KeypointJudgement]],
) -> float:
    """Micro-averaged coverage: covered-and-not-contradicted over total."""
    if not verdicts:
        raise EmptyDataset("no keypoint verdicts")
    covered = 0
    total = 0
    for sample in verdicts:
        if not sample:
            raise ValueError("sample without keypoints")
        for judgement in sample:
            total += 1
            if judgement.covered and not judgement.contradicted:
                covered += 1
    return covered / total


def advantage_score(
    recall: tuple[float, float, float],
    precision: tuple[float, float, float],
) -> tuple[float, float, float]:
    """(r, p, a) from win/tie/loss proportions on each axis; a is in [-1, 1]."""
    for name, (win, tie, loss) in (("recall", recall), ("precision", precision)):
        for value in (win, tie, loss):
            if not (0 <= value <= 1):
                raise ValueError(f"{name} proportions must lie in [0, 1]")
        if tie >= 1:
            raise DegenerateTally(f"{name} tie proportion is 1")
    r = recall[0] / (1 - recall[1])
    p = precision[0] / (1 - precision[1])
    if r + p == 0:
        raise DegenerateTally("r + p is zero")
    a = 4 * r * p / (r + p) - 1
    return r, p, a


def compare_retrievers(
    dataset: Sequence[Mapping],
    retriever_a: Retriever,
    retriever_b: Retriever,
    judge: JudgeBackend,
    seed: int = 0,
) -> tuple[Tally, dict]:
    """Pairwise A-vs-B judging over a dataset, with randomized positions.

    Returns the Tally (from A's perspective) and a JSON-ready report with
    one row per sample plus the position-randomization seed for replay.
    """
    if not dataset:
        raise EmptyDataset("empty comparison dataset")
    rng = random.Random(seed)
    tally = Tally()
    rows = []
    failures = 0
    for sample in dataset:
        question = str(sample["question"])
        reference = _reference_blob(sample)
        swap = rng.random() < 0.5
        try:
            text_a = retriever_a(question)
            text_b = retriever_b(question)
            first, second = (text_b, text_a) if swap else (text_a, text_b)
            outcomes = {}
            for axis, rubric in (("recall", "recall-compare"), ("precision", "precision-compare")):
                verdict: CompareVerdict = judge.judge(
                    question, reference, (first, second), rubric
                )
                if swap:
                    verdict = verdict.flipped()
                outcomes[axis] = verdict.outcome
                tally.add(axis, verdict.outcome)
        except Exception as exc:  # judge/retriever failure: exclude the sample
            failures += 1
            logger.warning("sample %r excluded (%s)", sample.get("id"), exc)
            rows.append({"id": sample.get("id"), "error": str(exc)})
            continue
        rows.append(
            {
                "id": sample.get("id"),
                "swapped": swap,
                "recall": outcomes["recall"],
                "precision": outcomes["precision"],
            }
        )
    report = {
        "seed": seed,
        "samples": len(dataset),
        "excluded": failures,
        "tally": tally.to_dict(),
        "rows": rows,
    }
    if tally.samples:
        try:
            r, p, a = tally.advantage()
        except DegenerateTally as exc:
            report["advantage_unavailable"] = str(exc)
        else:
            report["advantage"] = {"r": r, "p": p, "a": a, "a_x100": a * 100}
    return tally, report


def _reference_blob(sample: Mapping) -> str:
    gold = sample.get("keypoints") or (
        [sample["gold_answer"]] if sample.get("gold_answer") else []
    )
    return json.dumps(
        {"gold": list(gold), "noise": list(sample.get("noise", []))},
        ensure_ascii=False,
    )


def accuracy_and_f1(
    predictions: Sequence[str], gold: Sequence[str]
) -> dict[str, float]:
    """Exact-match accuracy plus binary F1 on the positive class.

    F1 treats (case-folded) "true"/"yes"/"1" as the positive label; for
    multiple-choice data only the accuracy field is meaningful.
    """
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gold)} gold")
    if not gold:
        raise EmptyDataset("no samples")
    norm = lambda s: str(s).strip().casefold()
    correct = sum(1 for p, g in zip(predictions, gold) if norm(p) == norm(g))
    positives = {"true", "yes", "1"}
    tp = fp = fn = 0
    for p, g in zip(predictions, gold):
        p_pos = norm(p) in positives
        g_pos = norm(g) in positives
        if p_pos and g_pos:
            tp += 1
        elif p_pos and not g_pos:
            fp += 1
        elif not p_pos and g_pos:
            fn += 1
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return {"accuracy": correct / len(gold), "f1": f1}


@dataclass
class KeypointReport:
    score: float
    per_sample: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"score": self.score, "per_sample": self.per_sample}


def evaluate_keypoints(
    dataset: Sequence[Mapping],
    answer_fn: Callable[[Mapping], str],
    judge: JudgeBackend,
) -> KeypointReport:
    """Judge every sample's answer against its keypoints and micro-average.

    Verdicts are cached by (question, candidate hash) so a repeated
    question/answer pair is never re-judged.
    """
    if not dataset:
        raise EmptyDataset("empty keypoint dataset")
    verdicts = []
    per_sample = []
    cache: dict[tuple[str, str], list[KeypointJudgement]] = {}
    for sample in dataset:
        keypoints = [str(k) for k in sample.get("keypoints", [])]
        if not keypoints:
            raise ValueError(f"sample {sample.get('id')!r} has no keypoints")
        question = str(sample["question"])
        candidate = answer_fn(sample)
        key = (question, _candidate_hash(keypoints, candidate))
        sample_verdicts = cache.get(key)
        if sample_verdicts is None:
            sample_verdicts = judge.judge(
                question, "\n".join(keypoints), candidate, "keypoint-coverage"
            )
            cache[key] = sample_verdicts
        verdicts.append(sample_verdicts)
        per_sample.append(
            {
                "id": sample.get("id"),
                "keypoints": [
                    {"keypoint": v.keypoint, "covered": v.covered, "contradicted": v.contradicted}
                    for v in sample_verdicts
                ],
            }
        )
    return KeypointReport(score=keypoint_score(verdicts), per_sample=per_sample)


def _candidate_hash(keypoints: Sequence[str], candidate: str) -> str:
    import hashlib

    payload = "\x1f".join([*keypoints, candidate]).encode("utf-8")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


def load_dataset(path) -> list[dict]:
    """JSON Lines dataset: {id, question, gold_answer?, keypoints?, options?}."""
    from pathlib import Path

    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    return rows
