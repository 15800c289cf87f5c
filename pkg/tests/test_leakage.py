import numpy as np
import pytest

from biasaudit import ProtectedAttribute, lic, train_leakage_classifier
from biasaudit.leakage import leakage_component, tokenize

ATTR = ProtectedAttribute("cohort", ("alpha", "beta"))

TEMPLATES = (
    "a person sitting on a bench",
    "someone riding a bicycle",
    "a person reading a book",
    "someone walking a dog",
)


def _neutral_rows(n, seed, leak_token=None, leak_rate=0.0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        demo = "alpha" if i % 2 == 0 else "beta"
        text = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
        if leak_token and rng.random() < leak_rate:
            text = f"{text} {leak_token[demo]}"
        rows.append((f"c{i:04d}", text, demo))
    return rows


def test_tokenize_masks_and_bigrams():
    grams = tokenize("The Woman walked", mask_list=("woman",))
    assert "woman" not in grams
    assert "maskedterm" in grams
    assert "the_maskedterm" in grams


def test_separable_corpus_reaches_high_accuracy():
    rows = []
    for i in range(60):
        demo = "alpha" if i % 2 == 0 else "beta"
        word = "azure" if demo == "alpha" else "crimson"
        rows.append((f"c{i:04d}", f"a {word} jacket on a chair", demo))
    clf = train_leakage_classifier(rows, ATTR, seed=0)
    assert clf.train_accuracy >= 0.99


def test_shuffled_labels_stay_near_chance():
    # chance-level oracle over 20 seeds for balanced binary data
    accuracies = []
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        rows = _neutral_rows(80, seed)
        labels = [demo for _, _, demo in rows]
        rng.shuffle(labels)
        shuffled = [
            (key, text, demo)
            for (key, text, _), demo in zip(rows, labels)
        ]
        clf = train_leakage_classifier(shuffled, ATTR, seed=seed)
        accuracies.append(
            leakage_component(clf, shuffled) * 2
        )  # ~ accuracy x mean confidence x 2
    # with no signal, leakage stays well below the separable regime
    assert 0.3 <= float(np.mean(accuracies)) <= 0.75


def test_identical_caption_both_classes_is_symmetric():
    rows = [("a", "a person walking", "alpha"), ("b", "a person walking", "beta")]
    clf = train_leakage_classifier(rows, ATTR, seed=5)
    probs = clf.predict_proba(["a person walking"])
    assert probs[0] == pytest.approx([0.5, 0.5], abs=1e-9)


def test_probabilities_sum_to_one():
    rows = _neutral_rows(30, 21)
    clf = train_leakage_classifier(rows, ATTR, seed=2)
    probs = clf.predict_proba([text for _, text, _ in rows])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(probs >= 0.0)


def test_missing_demographic_errors():
    rows = [("a", "text one", "alpha"), ("b", "text two", "alpha")]
    with pytest.raises(ValueError, match="zero captions"):
        train_leakage_classifier(rows, ATTR, seed=0)


def test_lic_zero_for_identical_inputs():
    rows = _neutral_rows(40, 3)
    result = lic(rows, rows, ATTR, seed=7)
    assert result.lic == 0.0
    assert result.lic_gt == result.lic_pred


def test_lic_positive_when_predictions_leak():
    tokens = {"alpha": "zephyr", "beta": "quartz"}
    wins = 0
    for seed in range(10):
        gt = _neutral_rows(60, 100 + seed)
        pred = _neutral_rows(60, 200 + seed, leak_token=tokens, leak_rate=0.6)
        result = lic(gt, pred, ATTR, seed=seed)
        if result.lic > 0:
            wins += 1
    assert wins >= 9


def test_lic_negative_when_ground_truth_leaks():
    tokens = {"alpha": "zephyr", "beta": "quartz"}
    wins = 0
    for seed in range(10):
        gt = _neutral_rows(60, 300 + seed, leak_token=tokens, leak_rate=0.6)
        pred = _neutral_rows(60, 400 + seed)
        result = lic(gt, pred, ATTR, seed=seed)
        if result.lic < 0:
            wins += 1
    assert wins >= 9


def test_components_bounded():
    rows = _neutral_rows(30, 11)
    result = lic(rows, _neutral_rows(30, 12), ATTR, seed=1)
    assert 0.0 <= result.lic_gt <= 1.0
    assert 0.0 <= result.lic_pred <= 1.0
    assert -1.0 <= result.lic <= 1.0


def test_training_is_order_invariant():
    rows = _neutral_rows(30, 13)
    shuffled = list(reversed(rows))
    a = train_leakage_classifier(rows, ATTR, seed=3)
    b = train_leakage_classifier(shuffled, ATTR, seed=3)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.bias, b.bias)
