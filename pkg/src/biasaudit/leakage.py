"""Caption leakage: how predictable the demographic is from caption text.

Two classifiers of the same family are trained, one on ground-truth captions
and one on generated captions; the leakage score of each side is the mean
confidence assigned to the true demographic on correctly classified captions,
and the reported leakage is the generated-side score minus the ground-truth
score. The classifier is a hashed bag-of-ngrams multinomial logistic
regression: deterministic, desk-scale, and pluggable behind the same
interface should a heavier text encoder be wanted.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .data import ProtectedAttribute

_TOKEN_RE = re.compile(r"[a-z0-9]+")
MASK_TOKEN = "maskedterm"

# demographic-revealing words masked before training (configurable; the four
# attribute families this toolkit ships schemas for)
DEFAULT_MASK_LIST = (
    "male", "female", "man", "woman", "men", "women", "boy", "girl",
    "boys", "girls", "he", "she", "him", "her", "his", "hers",
    "gentleman", "lady", "guy", "gal",
    "lighter", "darker", "light", "dark", "skinned",
    "white", "black", "asian", "latino", "latina", "hispanic", "indian",
    "african", "european", "american",
    "young", "old", "elderly", "teen", "teenager", "child", "adult", "senior",
)

DEFAULT_HASH_BITS = 18
DEFAULT_EPOCHS = 150
DEFAULT_LEARNING_RATE = 0.5
DEFAULT_L2 = 0.0


@lru_cache(maxsize=1 << 16)
def _bucket(token: str, bits: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (1 << bits)


def tokenize(text: str, mask_list: Sequence[str] = ()) -> list[str]:
    """Lowercase word tokens plus adjacent bigrams; masked words are replaced
    by a shared placeholder so their count carries no demographic signal."""
    masked = set(mask_list)
    words = [
        MASK_TOKEN if w in masked else w for w in _TOKEN_RE.findall(text.lower())
    ]
    grams = list(words)
    grams.extend(f"{a}_{b}" for a, b in zip(words, words[1:]))
    return grams


def _feature_matrix(
    texts: Sequence[str], mask_list: Sequence[str], bits: int
) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        counts: dict[int, float] = {}
        for gram in tokenize(text, mask_list):
            b = _bucket(gram, bits)
            counts[b] = counts.get(b, 0.0) + 1.0
        for b in sorted(counts):
            indices.append(b)
            data.append(counts[b])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(texts), 1 << bits),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LeakageClassifier:
    """Multinomial logistic regression over hashed unigram+bigram counts."""

    attribute: ProtectedAttribute
    weights: np.ndarray  # (2**hash_bits, n_demographics)
    bias: np.ndarray
    hash_bits: int
    mask_list: tuple[str, ...]
    seed: int
    epochs: int
    learning_rate: float
    l2: float
    train_accuracy: float

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        feats = _feature_matrix(texts, self.mask_list, self.hash_bits)
        return _softmax(feats @ self.weights + self.bias)

    def predict(self, texts: Sequence[str]) -> list[str]:
        probs = self.predict_proba(texts)
        # argmax takes the first maximum, i.e. demographic order breaks ties
        return [self.attribute.demographics[i] for i in probs.argmax(axis=1)]


def train_leakage_classifier(
    samples: Sequence[tuple[str, str, str]],
    attribute: ProtectedAttribute,
    seed: int = 0,
    mask_list: Sequence[str] = DEFAULT_MASK_LIST,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    l2: float = DEFAULT_L2,
    hash_bits: int = DEFAULT_HASH_BITS,
) -> LeakageClassifier:
    """Train a demographic classifier on (sort key, caption, demographic) rows.

    Full-batch gradient descent with a fixed epoch count and a seeded tiny
    init, so the result is deterministic given (data, seed, hyperparameters).
    Rows are sorted by key before training, making the outcome independent of
    input order.
    """
    rows = sorted(samples, key=lambda r: (r[0], r[1]))
    demos = attribute.demographics
    present = {d: 0 for d in demos}
    for _, _, demo in rows:
        if demo not in present:
            raise ValueError(f"unknown demographic {demo!r}")
        present[demo] += 1
    empty = [d for d, c in present.items() if c == 0]
    if empty:
        raise ValueError(f"demographics with zero captions: {empty}")

    texts = [text for _, text, _ in rows]
    labels = np.array([attribute.index_of(demo) for _, _, demo in rows])
    feats = _feature_matrix(texts, tuple(mask_list), hash_bits)
    n, n_features = feats.shape
    n_classes = len(demos)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    weights = rng.normal(0.0, 1e-3, size=(n_features, n_classes))
    bias = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0

    # gradients only touch feature columns that occur in the data; run the
    # descent on that compact slice and decay the untouched columns in closed
    # form (exact for the default l2 = 0)
    active = np.unique(feats.indices)
    compact = feats.tocsc()[:, active].tocsr()
    compact_t = compact.T.tocsr()
    active_weights = weights[active].copy()
    for _ in range(epochs):
        probs = _softmax(compact @ active_weights + bias)
        err = (probs - onehot) / n
        active_weights -= learning_rate * (compact_t @ err + l2 * active_weights)
        bias -= learning_rate * err.sum(axis=0)
    if l2 > 0.0:
        weights *= (1.0 - learning_rate * l2) ** epochs
    weights[active] = active_weights

    probs = _softmax(compact @ active_weights + bias)
    accuracy = float(np.mean(probs.argmax(axis=1) == labels))
    return LeakageClassifier(
        attribute=attribute,
        weights=weights,
        bias=bias,
        hash_bits=hash_bits,
        mask_list=tuple(mask_list),
        seed=seed,
        epochs=epochs,
        learning_rate=learning_rate,
        l2=l2,
        train_accuracy=accuracy,
    )


def leakage_component(
    classifier: LeakageClassifier,
    samples: Sequence[tuple[str, str, str]],
) -> float:
    """Mean over samples of the true-class probability on correctly
    classified captions; lies in [0, 1]."""
    rows = sorted(samples, key=lambda r: (r[0], r[1]))
    texts = [text for _, text, _ in rows]
    labels = np.array([classifier.attribute.index_of(demo) for _, _, demo in rows])
    probs = classifier.predict_proba(texts)
    predicted = probs.argmax(axis=1)
    true_prob = probs[np.arange(len(rows)), labels]
    return float(np.mean(true_prob * (predicted == labels)))


@dataclass
class LicResult:
    lic_gt: float
    lic_pred: float
    lic: float
    gt_train_accuracy: float
    pred_train_accuracy: float


def lic(
    gt_samples: Sequence[tuple[str, str, str]],
    pred_samples: Sequence[tuple[str, str, str]],
    attribute: ProtectedAttribute,
    seed: int = 0,
    mask_list: Sequence[str] = DEFAULT_MASK_LIST,
    **hyper,
) -> LicResult:
    """Leakage difference between generated and ground-truth captions.

    Positive values mean generated captions reveal the demographic more than
    the ground truth does. Identical caption sets under the same seed yield
    exactly zero.
    """
    gt_clf = train_leakage_classifier(
        gt_samples, attribute, seed=seed, mask_list=mask_list, **hyper
    )
    pred_clf = train_leakage_classifier(
        pred_samples, attribute, seed=seed, mask_list=mask_list, **hyper
    )
    lic_gt = leakage_component(gt_clf, gt_samples)
    lic_pred = leakage_component(pred_clf, pred_samples)
    return LicResult(
        lic_gt=lic_gt,
        lic_pred=lic_pred,
        lic=lic_pred - lic_gt,
        gt_train_accuracy=gt_clf.train_accuracy,
        pred_train_accuracy=pred_clf.train_accuracy,
    )
