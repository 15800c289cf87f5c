import numpy as np
import pytest

from biasaudit import (
    DbaInputs,
    PredictionSet,
    ProtectedAttribute,
    build_dba_inputs,
    dba,
    filter_answers,
    kl_disparity,
    scored_table,
    vqa_score_table,
)
from biasaudit.data import ScoredRecord, VqaRecord
from biasaudit.downstream import (
    ScoreTable,
    majority_answer,
    normalize_answer,
    vqa_answer_score,
)
from conftest import make_partition
from oracles import dba_oracle, filter_oracle

KL_08_02 = 0.19274475702175742


def _table(attr, values):
    return ScoreTable(
        metric="test",
        attribute=attr,
        means=dict(zip(attr.demographics, values)),
        counts={d: 10 for d in attr.demographics},
    )


def test_kl_disparity_equal_scores(gender):
    assert kl_disparity(_table(gender, [0.7, 0.7])) == 0.0


def test_kl_disparity_frozen_and_scale_invariant(gender):
    assert kl_disparity(_table(gender, [0.8, 0.2])) == pytest.approx(
        KL_08_02, abs=1e-12
    )
    # CIDEr-style scaling by 100 changes nothing
    assert kl_disparity(_table(gender, [80.0, 20.0])) == pytest.approx(
        KL_08_02, abs=1e-12
    )


def test_kl_disparity_undefined_cases(gender):
    assert kl_disparity(_table(gender, [None, 0.5])) is None
    assert kl_disparity(_table(gender, [-0.1, 0.5])) is None
    assert kl_disparity(_table(gender, [0.0, 0.0])) is None


def test_normalize_and_score_modes():
    assert normalize_answer("  Red Apple! ") == "red apple"
    truths = ["red", "red", "Red", "blue"]
    assert vqa_answer_score("RED.", truths, "soft") == 1.0
    assert vqa_answer_score("blue", truths, "soft") == pytest.approx(1 / 3)
    assert vqa_answer_score("blue", truths, "hard") == 1.0
    assert vqa_answer_score("green", truths, "hard") == 0.0


def test_majority_answer_tie_lexicographic():
    assert majority_answer(["b", "a", "b", "a"]) == "a"
    assert majority_answer(["b", "a", "b"]) == "b"


def _vqa_sets(rows):
    gt_entries = [
        VqaRecord(sid, qid, "?", None, tuple(truths)) for sid, qid, truths, _ in rows
    ]
    pred_entries = [
        VqaRecord(sid, qid, None, pred, None) for sid, qid, _, pred in rows
    ]
    return (
        PredictionSet("vqa", tuple(gt_entries)),
        PredictionSet("vqa", tuple(pred_entries)),
    )


def test_vqa_score_table(gender):
    rows = [
        ("a", "q0", ["red"] * 3, "red"),
        ("b", "q0", ["red"] * 3, "blue"),
        ("c", "q0", ["blue"] * 3, "blue"),
    ]
    gt, pred = _vqa_sets(rows)
    part = make_partition(gender, {"female": {"a", "b"}, "male": {"c"}})
    table = vqa_score_table(gt, pred, part)
    assert table.means["female"] == 0.5
    assert table.means["male"] == 1.0
    assert table.counts == {"female": 2, "male": 1}


def test_scored_table(gender):
    entries = tuple(
        ScoredRecord(sid, "cider", val)
        for sid, val in [("a", 1.0), ("b", 0.5), ("c", 2.0)]
    )
    scores = PredictionSet("scored", entries)
    part = make_partition(gender, {"female": {"a", "b"}, "male": {"c"}})
    table = scored_table(scores, part, "cider")
    assert table.means["female"] == 0.75
    assert table.means["male"] == 2.0


# ---------------------------------------------------------------------------
# answer filtering
# ---------------------------------------------------------------------------


def _inputs(attr, gt_rows, pred_rows=None):
    if pred_rows is None:
        pred_rows = gt_rows
    return DbaInputs(
        attribute=attr,
        gt=tuple(gt_rows),
        pred=tuple(pred_rows),
        vocabulary=tuple(sorted({t for _, t, _ in gt_rows})),
    )


def test_filter_answers_rule(gender):
    rows = [
        ("q0", "yes", "female"),
        ("q1", "3", "male"),
        ("q2", "red", "female"),
    ]
    filtered = filter_answers(_inputs(gender, rows))
    assert filtered.vocabulary == ("red",)
    assert [q for q, _, _ in filtered.gt] == ["q2"]
    assert [q for q, _, _ in filtered.pred] == ["q2"]


def test_filter_answers_top_n(gender):
    rows = []
    for i in range(60):
        # answer a00 appears 61 times, a01 60 times, ... a59 twice
        for j in range(i, 60):
            rows.append((f"q{i:02d}_{j:02d}", f"a{i:02d}", "female"))
    rows.append(("qx", "a00", "male"))
    inputs = _inputs(gender, rows)
    filtered = filter_answers(inputs, top_n=50)
    assert len(filtered.vocabulary) == 50
    assert "a59" not in filtered.vocabulary


@pytest.mark.parametrize("seed", range(6))
def test_filter_answers_matches_oracle_and_idempotent(seed, gender):
    rng = np.random.default_rng(seed)
    pool = (
        [f"w{i}" for i in range(70)]
        + ["yes", "no", "Yes", "3", "4.5", "-2", ".5"]
    )
    rows = [
        (
            f"q{i:04d}",
            pool[int(rng.integers(len(pool)))],
            "female" if rng.random() < 0.5 else "male",
        )
        for i in range(300)
    ]
    inputs = _inputs(gender, rows)
    filtered = filter_answers(inputs, top_n=50)
    assert {q for q, _, _ in filtered.gt} == filter_oracle(rows, 50)
    again = filter_answers(filtered, top_n=50)
    assert again.gt == filtered.gt
    assert again.pred == filtered.pred
    assert again.vocabulary == filtered.vocabulary


# ---------------------------------------------------------------------------
# directional amplification
# ---------------------------------------------------------------------------


def test_dba_zero_when_predictions_equal_gt(gender):
    rows = [
        ("q0", "red", "female"),
        ("q1", "blue", "male"),
        ("q2", "red", "male"),
        ("q3", "blue", "female"),
    ]
    assert dba(_inputs(gender, rows)) == 0.0


def test_dba_worked_example(gender):
    # planted 2x2 dataset with known amplification 0.25
    gt = (
        [("m" + str(i), "red", "male") for i in range(3)]
        + [("m3", "blue", "male")]
        + [("f0", "red", "female")]
        + [("f" + str(i), "blue", "female") for i in range(1, 4)]
    )
    pred = [
        (q, "red" if demo == "male" else "blue", demo) for q, _, demo in gt
    ]
    attr = ProtectedAttribute("gender", ("male", "female"))
    inputs = DbaInputs(
        attribute=attr, gt=tuple(gt), pred=tuple(pred),
        vocabulary=("blue", "red"),
    )
    assert dba(inputs) == pytest.approx(0.25, abs=1e-12)
    assert dba_oracle(inputs) == pytest.approx(0.25, abs=1e-12)


def _random_dba_inputs(seed):
    rng = np.random.default_rng(seed)
    n_demos = int(rng.integers(2, 5))
    attr = ProtectedAttribute("attr", tuple(f"d{i}" for i in range(n_demos)))
    n_answers = int(rng.integers(2, 11))
    answers = [f"ans{i}" for i in range(n_answers)]
    n = int(rng.integers(n_demos, 201))
    gt, pred = [], []
    for i in range(n):
        demo = attr.demographics[i % n_demos]  # every demographic present
        gt.append((f"q{i}", answers[int(rng.integers(n_answers))], demo))
        pred.append((f"q{i}", answers[int(rng.integers(n_answers))], demo))
    vocab = tuple(sorted({t for _, t, _ in gt}))
    return DbaInputs(attribute=attr, gt=tuple(gt), pred=tuple(pred), vocabulary=vocab)


@pytest.mark.parametrize("seed", range(12))
def test_dba_matches_bruteforce_oracle(seed):
    inputs = _random_dba_inputs(seed)
    got = dba(inputs)
    assert got == pytest.approx(dba_oracle(inputs), abs=1e-12)
    assert -1.0 <= got <= 1.0


def test_dba_invariant_under_joint_relabeling(gender):
    inputs = _random_dba_inputs(77)
    swapped_attr = ProtectedAttribute(
        inputs.attribute.name, tuple(reversed(inputs.attribute.demographics))
    )
    swapped = DbaInputs(
        attribute=swapped_attr,
        gt=inputs.gt,
        pred=inputs.pred,
        vocabulary=inputs.vocabulary,
    )
    assert dba(inputs) == pytest.approx(dba(swapped), abs=1e-12)


def test_dba_empty_vocabulary_errors(gender):
    inputs = _inputs(gender, [("q0", "yes", "female"), ("q1", "no", "male")])
    filtered = filter_answers(inputs)
    with pytest.raises(ValueError, match="empty"):
        dba(filtered)


def test_build_dba_inputs_joins_and_normalizes(gender):
    gt = PredictionSet(
        "vqa",
        (
            VqaRecord("a", "q0", "?", None, ("Red", "red", "blue")),
            VqaRecord("b", "q0", "?", None, ("BLUE!",)),
            VqaRecord("zz", "q0", "?", None, ("red",)),  # no demographic label
        ),
    )
    pred = PredictionSet(
        "vqa",
        (
            VqaRecord("a", "q0", None, "RED", None),
            VqaRecord("b", "q0", None, "green", None),
            VqaRecord("zz", "q0", None, "red", None),
        ),
    )
    part = make_partition(gender, {"female": {"a"}, "male": {"b"}})
    inputs = build_dba_inputs(gt, pred, part)
    assert inputs.vocabulary == ("blue", "red")
    assert ("a::q0", "red", "female") in inputs.gt
    assert ("b::q0", "green", "male") in inputs.pred
    assert len(inputs.gt) == 2
