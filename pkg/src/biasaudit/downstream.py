"""Downstream bias metrics over task predictions.

Covers the KL disparity of per-demographic mean scores (VQA accuracy, CIDEr
or any precomputed per-sample score) and directional bias amplification over
question/answer/demographic triples.
"""

from __future__ import annotations

import logging
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from ._common import kl_vs_uniform
from .data import (
    DemographicPartition,
    PredictionSet,
    ProtectedAttribute,
    TASK_SCORED,
    TASK_VQA,
)

log = logging.getLogger(__name__)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_NUMERAL_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)$")

ACCURACY_SOFT = "soft"
ACCURACY_HARD = "hard"


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def is_binary_answer(text: str) -> bool:
    return normalize_answer(text) in ("yes", "no")


def is_numeric_answer(text: str) -> bool:
    return bool(_NUMERAL_RE.match(text.strip().lower()))


def vqa_answer_score(predicted: str, truths: Iterable[str], mode: str) -> float:
    """Per-question VQA accuracy.

    Soft mode is min(#matching ground-truth answers / 3, 1); hard mode is 1
    when any ground-truth answer matches. Matching is on normalized strings.
    """
    pred = normalize_answer(predicted)
    matches = sum(1 for t in truths if normalize_answer(t) == pred)
    if mode == ACCURACY_HARD:
        return 1.0 if matches > 0 else 0.0
    if mode == ACCURACY_SOFT:
        return min(matches / 3.0, 1.0)
    raise ValueError(f"accuracy mode must be 'soft' or 'hard', got {mode!r}")


@dataclass
class ScoreTable:
    """Per-demographic mean of a task score."""

    metric: str
    attribute: ProtectedAttribute
    means: dict[str, float | None]
    counts: dict[str, int]


def vqa_score_table(
    gt: PredictionSet,
    pred: PredictionSet,
    partition: DemographicPartition,
    mode: str = ACCURACY_SOFT,
) -> ScoreTable:
    """Join predictions with ground truth on (sample, question) and average
    the per-question accuracy per demographic."""
    if gt.task != TASK_VQA or pred.task != TASK_VQA:
        raise ValueError("vqa_score_table needs vqa prediction sets")
    truths = {
        (e.sample_id, e.question_id): e.truths
        for e in gt.entries
        if e.truths is not None
    }
    preds = {
        (e.sample_id, e.question_id): e.predicted
        for e in pred.entries
        if e.predicted is not None
    }
    sums: dict[str, float] = {d: 0.0 for d in partition.attribute.demographics}
    counts: dict[str, int] = {d: 0 for d in partition.attribute.demographics}
    for key in sorted(truths.keys() & preds.keys()):
        demo = partition.demographic_of(key[0])
        if demo is None:
            continue
        counts[demo] += 1
        sums[demo] += vqa_answer_score(preds[key], truths[key], mode)
    means = {
        d: (sums[d] / counts[d] if counts[d] else None)
        for d in partition.attribute.demographics
    }
    return ScoreTable(
        metric=f"vqa-accuracy-{mode}",
        attribute=partition.attribute,
        means=means,
        counts=counts,
    )


def scored_table(
    scores: PredictionSet,
    partition: DemographicPartition,
    metric: str,
) -> ScoreTable:
    """Per-demographic mean of an ingested per-sample score (e.g. CIDEr)."""
    if scores.task != TASK_SCORED:
        raise ValueError("scored_table needs a scored prediction set")
    sums = {d: 0.0 for d in partition.attribute.demographics}
    counts = {d: 0 for d in partition.attribute.demographics}
    for e in sorted(scores.entries, key=lambda e: (e.sample_id, e.metric)):
        if e.metric != metric:
            continue
        demo = partition.demographic_of(e.sample_id)
        if demo is None:
            continue
        counts[demo] += 1
        sums[demo] += e.value
    means = {
        d: (sums[d] / counts[d] if counts[d] else None)
        for d in partition.attribute.demographics
    }
    return ScoreTable(
        metric=metric, attribute=partition.attribute, means=means, counts=counts
    )


def kl_disparity(scores: ScoreTable) -> float | None:
    """KL divergence (nats) of L1-normalized per-demographic scores against
    uniform; same arithmetic as the recall disparity."""
    values = [scores.means[d] for d in scores.attribute.demographics]
    return kl_vs_uniform(values)


# ---------------------------------------------------------------------------
# directional bias amplification
# ---------------------------------------------------------------------------


@dataclass
class DbaInputs:
    """Question/answer/demographic triples for ground truth and predictions.

    Both sides cover identical question-id sets; the answer vocabulary is the
    set of distinct ground-truth answers.
    """

    attribute: ProtectedAttribute
    gt: tuple[tuple[str, str, str], ...]  # (question id, answer, demographic)
    pred: tuple[tuple[str, str, str], ...]
    vocabulary: tuple[str, ...]

    def __post_init__(self):
        gt_q = {q for q, _, _ in self.gt}
        pred_q = {q for q, _, _ in self.pred}
        if gt_q != pred_q:
            raise ValueError("ground truth and predictions cover different questions")
        if len(gt_q) != len(self.gt) or len(pred_q) != len(self.pred):
            raise ValueError("duplicate question ids")
        demos = set(self.attribute.demographics)
        for _, _, a in self.gt:
            if a not in demos:
                raise ValueError(f"unknown demographic {a!r} in ground truth")
        for _, _, a in self.pred:
            if a not in demos:
                raise ValueError(f"unknown demographic {a!r} in predictions")


def majority_answer(truths: Iterable[str]) -> str:
    """Most frequent normalized ground-truth answer; ties go to the
    lexicographically smallest."""
    counts = Counter(normalize_answer(t) for t in truths)
    return min(counts, key=lambda a: (-counts[a], a))


def build_dba_inputs(
    gt: PredictionSet,
    pred: PredictionSet,
    partition: DemographicPartition,
) -> DbaInputs:
    """Join VQA ground truth and predictions into amplification inputs.

    The per-question ground-truth answer is the majority of its answer
    multiset; answers are compared in normalized form. Questions on samples
    without a demographic label are dropped.
    """
    if gt.task != TASK_VQA or pred.task != TASK_VQA:
        raise ValueError("build_dba_inputs needs vqa prediction sets")
    truths = {
        (e.sample_id, e.question_id): e.truths
        for e in gt.entries
        if e.truths is not None
    }
    preds = {
        (e.sample_id, e.question_id): e.predicted
        for e in pred.entries
        if e.predicted is not None
    }
    gt_rows = []
    pred_rows = []
    for key in sorted(truths.keys() & preds.keys()):
        demo = partition.demographic_of(key[0])
        if demo is None:
            continue
        qid = f"{key[0]}::{key[1]}"
        gt_rows.append((qid, majority_answer(truths[key]), demo))
        pred_rows.append((qid, normalize_answer(preds[key]), demo))
    vocab = tuple(sorted({t for _, t, _ in gt_rows}))
    return DbaInputs(
        attribute=partition.attribute,
        gt=tuple(gt_rows),
        pred=tuple(pred_rows),
        vocabulary=vocab,
    )


def filter_answers(inputs: DbaInputs, top_n: int = 50) -> DbaInputs:
    """Drop questions whose ground-truth answer is binary, numerical, or
    outside the top_n most frequent answers (frequency ties broken
    lexicographically). Predictions keep exactly the surviving question ids.
    The operation is idempotent."""
    content = [
        (q, t, a)
        for q, t, a in inputs.gt
        if not is_binary_answer(t) and not is_numeric_answer(t)
    ]
    freq = Counter(t for _, t, _ in content)
    keep_vocab = set(sorted(freq, key=lambda t: (-freq[t], t))[:top_n])
    gt_rows = tuple((q, t, a) for q, t, a in content if t in keep_vocab)
    keep_q = {q for q, _, _ in gt_rows}
    pred_rows = tuple((q, t, a) for q, t, a in inputs.pred if q in keep_q)
    if not gt_rows:
        log.warning("answer filtering removed every question")
    return DbaInputs(
        attribute=inputs.attribute,
        gt=gt_rows,
        pred=pred_rows,
        vocabulary=tuple(sorted({t for _, t, _ in gt_rows})),
    )


def dba(inputs: DbaInputs) -> float:
    """Directional bias amplification, demographics driving answers.

    Mean over all (demographic, answer) cells of u * delta - (1 - u) * delta,
    where u flags a positive ground-truth association and delta is the change
    in the answer's conditional probability from ground truth to predictions.
    Conditioning on an empty demographic yields probability 0 (diagnosed, not
    an error).
    """
    if not inputs.vocabulary:
        raise ValueError("empty answer vocabulary after filtering")
    n = len(inputs.gt)
    if n == 0:
        raise ValueError("no ground-truth samples")

    demos = inputs.attribute.demographics
    gt_a = Counter(a for _, _, a in inputs.gt)
    gt_t = Counter(t for _, t, _ in inputs.gt)
    gt_at = Counter((a, t) for _, t, a in inputs.gt)
    pred_a = Counter(a for _, _, a in inputs.pred)
    pred_at = Counter((a, t) for _, t, a in inputs.pred)
    n_pred = len(inputs.pred)

    for a in demos:
        if gt_a[a] == 0:
            log.warning(
                "demographic %r has no ground-truth samples; its conditional "
                "probabilities are taken as 0",
                a,
            )

    total = 0.0
    for a in demos:
        p_a = gt_a[a] / n
        for t in inputs.vocabulary:
            p_t = gt_t[t] / n
            p_at = gt_at[(a, t)] / n
            u = 1.0 if p_at > p_a * p_t else 0.0
            cond_gt = gt_at[(a, t)] / gt_a[a] if gt_a[a] else 0.0
            cond_pred = (
                pred_at[(a, t)] / pred_a[a] if n_pred and pred_a[a] else 0.0
            )
            delta = cond_pred - cond_gt
            total += u * delta - (1.0 - u) * delta
    return total / (len(demos) * len(inputs.vocabulary))
