"""Pre-training bias metrics computed directly from embeddings.

Two metrics: the KL divergence of per-demographic recall@k against the
equal-performance distribution, and MaxSkew@k of prompt-to-image retrieval.
Similarity is cosine on the raw embeddings; ranking ties are broken by
ascending candidate id, and all reductions accumulate in id order so results
are independent of scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from . import _kernels
from ._common import kl_vs_uniform, normalize_rows
from .data import DemographicPartition, EmbeddingSet, ProtectedAttribute


@dataclass
class RetrievalCorpus:
    """Image and text embeddings plus the image -> correct-text pairing."""

    images: EmbeddingSet
    texts: EmbeddingSet
    pairs: dict[str, frozenset[str]]

    def __post_init__(self):
        text_ids = set(self.texts.ids)
        self.pairs = {img: frozenset(txts) for img, txts in self.pairs.items()}
        for img, txts in self.pairs.items():
            if img not in self.images._index:
                raise ValueError(f"pair references unknown image id {img!r}")
            if not txts:
                raise ValueError(f"image {img!r} has no correct texts")
            for t in txts:
                if t not in text_ids:
                    raise ValueError(f"pair references unknown text id {t!r}")
        for img in self.images.ids:
            if img not in self.pairs:
                raise ValueError(f"image {img!r} has no correct-text pairing")


def load_pairs(path: str | Path) -> dict[str, frozenset[str]]:
    """Read a JSON object mapping image id -> list of correct text ids."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: pairs file must be a JSON object")
    return {
        str(img): frozenset(str(t) for t in txts) for img, txts in raw.items()
    }


@dataclass
class RecallVector:
    """Per-demographic recall@k; an empty bucket yields an undefined entry."""

    attribute: ProtectedAttribute
    k: int
    recalls: dict[str, float | None]
    counts: dict[str, int]


def recall_at_k(
    corpus: RetrievalCorpus,
    partition: DemographicPartition,
    k: int,
) -> RecallVector:
    """Fraction of each bucket's images whose correct text ranks in the top k."""
    n_texts = len(corpus.texts)
    if not 1 <= k <= n_texts:
        raise ValueError(f"k={k} must satisfy 1 <= k <= number of texts ({n_texts})")

    text_order = sorted(range(n_texts), key=corpus.texts.ids.__getitem__)
    texts_sorted = normalize_rows(corpus.texts.matrix[text_order])
    text_pos = {corpus.texts.ids[idx]: pos for pos, idx in enumerate(text_order)}

    image_ids = partition.annotated_ids_sorted()
    for sid in image_ids:
        if sid not in corpus.images._index:
            raise ValueError(f"partition references unknown image id {sid!r}")
    queries = normalize_rows(
        corpus.images.matrix[[corpus.images.index_of(sid) for sid in image_ids]]
    )
    flat: list[int] = []
    offsets = [0]
    for sid in image_ids:
        flat.extend(sorted(text_pos[t] for t in corpus.pairs[sid]))
        offsets.append(len(flat))
    hits = _kernels.retrieval_hits(
        queries,
        texts_sorted,
        np.asarray(flat, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
        k,
    )
    hit_by_id = dict(zip(image_ids, hits.tolist()))

    recalls: dict[str, float | None] = {}
    counts: dict[str, int] = {}
    for demo in partition.attribute.demographics:
        members = partition.bucket_ids_sorted(demo)
        counts[demo] = len(members)
        if not members:
            recalls[demo] = None
            continue
        recalls[demo] = sum(1 for sid in members if hit_by_id[sid]) / len(members)
    return RecallVector(
        attribute=partition.attribute, k=k, recalls=recalls, counts=counts
    )


def kl_of_recall(recalls: RecallVector) -> float | None:
    """KL divergence (nats) of normalized recalls against uniform; Eq-style
    0 * ln(0) = 0. Undefined entries or zero total mass propagate as None."""
    values = [recalls.recalls[d] for d in recalls.attribute.demographics]
    return kl_vs_uniform(values)


@dataclass
class SkewResult:
    """Top-k demographic mix of one prompt's retrieval versus the corpus mix."""

    prompt: str
    k: int
    observed: dict[str, float]  # shares of the top-k retrieved images
    ideal: dict[str, float]  # corpus shares
    max_skew: float | None
    top_demographic: str | None


def max_skew_at_k(
    images: EmbeddingSet,
    prompt_vector: np.ndarray,
    partition: DemographicPartition,
    k: int,
    prompt_label: str = "",
) -> SkewResult:
    """Largest log ratio of a demographic's top-k share to its corpus share.

    Images are ranked by cosine similarity to the prompt with ties broken by
    ascending image id. Demographics absent from the top k contribute -inf and
    can never win the max; a demographic absent from the corpus is an error.
    """
    annotated = partition.annotated_ids_sorted()
    total = len(annotated)
    if not 1 <= k <= total:
        raise ValueError(
            f"k={k} must satisfy 1 <= k <= number of annotated images ({total})"
        )
    demo_of: dict[str, str] = {}
    for demo in partition.attribute.demographics:
        members = partition.buckets[demo]
        if not members:
            raise ValueError(
                f"demographic {demo!r} is absent from the corpus (ideal share 0)"
            )
        for sid in members:
            demo_of[sid] = demo

    rows = normalize_rows(
        images.matrix[[images.index_of(sid) for sid in annotated]]
    )
    prompt = np.asarray(prompt_vector, dtype=np.float64).ravel()
    norm = np.linalg.norm(prompt)
    if norm == 0.0:
        raise ValueError("prompt embedding has zero magnitude")
    sims = rows @ (prompt / norm)
    # stable sort on -sims keeps ascending id order inside ties
    top = np.argsort(-sims, kind="stable")[:k]

    demos = partition.attribute.demographics
    top_counts = {d: 0 for d in demos}
    for pos in top:
        top_counts[demo_of[annotated[pos]]] += 1
    observed = {d: top_counts[d] / k for d in demos}
    ideal = {d: len(partition.buckets[d]) / total for d in demos}

    best: float | None = None
    winner: str | None = None
    for d in demos:
        if observed[d] == 0.0:
            continue  # -inf, never wins
        skew = math.log(observed[d] / ideal[d])
        if best is None or skew > best:
            best = skew
            winner = d
    return SkewResult(
        prompt=prompt_label,
        k=k,
        observed=observed,
        ideal=ideal,
        max_skew=best,
        top_demographic=winner,
    )


@dataclass
class MeanSkewResult:
    mean: float | None
    skipped: int
    per_prompt: tuple[SkewResult, ...]


def mean_max_skew(
    images: EmbeddingSet,
    prompts: EmbeddingSet,
    partition: DemographicPartition,
    k: int,
) -> MeanSkewResult:
    """Arithmetic mean of MaxSkew@k over prompts with a defined skew."""
    if len(prompts) < 1:
        raise ValueError("at least one prompt embedding is required")
    results = []
    for pid in sorted(prompts.ids):
        results.append(
            max_skew_at_k(images, prompts.row(pid), partition, k, prompt_label=pid)
        )
    defined = [r.max_skew for r in results if r.max_skew is not None]
    skipped = len(results) - len(defined)
    mean = sum(defined) / len(defined) if defined else None
    return MeanSkewResult(mean=mean, skipped=skipped, per_prompt=tuple(results))
