"""Representation-space convergence: similarity of pairwise-similarity
profiles across models, before versus after downstream adaptation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._common import normalize_rows, row_norms
from .data import EmbeddingSet

STAGE_PRE = "pre"
STAGE_POST = "post"
HISTOGRAM_BINS = 50


@dataclass
class SimilarityProfile:
    """All D(D-1)/2 pairwise cosine similarities over a fixed id ordering."""

    model_id: str
    stage: str
    values: np.ndarray  # float64, pairs in (i < j) lexicographic order
    id_order: tuple[str, ...]


def similarity_profile(
    embeddings: EmbeddingSet,
    id_order: list[str] | tuple[str, ...],
    stage: str = STAGE_PRE,
) -> SimilarityProfile:
    """Cosine similarity of every unordered row pair, in id_order."""
    ids = tuple(id_order)
    if len(ids) < 2:
        raise ValueError("at least two sample ids are required")
    rows = embeddings.matrix[[embeddings.index_of(sid) for sid in ids]]
    norms = row_norms(rows)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(
            f"zero-magnitude embedding rows for ids "
            f"{[ids[i] for i in zero[:5]]} in {embeddings.model_id!r}"
        )
    values = _kernels.pairwise_dot_upper(normalize_rows(rows))
    return SimilarityProfile(
        model_id=embeddings.model_id, stage=stage, values=values, id_order=ids
    )


@dataclass
class ConvergenceStats:
    """Statistics of the model-versus-model profile similarities."""

    stage: str
    model_ids: tuple[str, ...]
    matrix: np.ndarray  # E x E, symmetric, unit diagonal
    mean: float
    std: float  # population standard deviation
    min: float
    max: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray


def inter_model_similarity(profiles: list[SimilarityProfile]) -> ConvergenceStats:
    """Cosine similarity between every pair of profile vectors.

    All profiles must share the length, id ordering, and stage. Statistics
    are over the off-diagonal entries; the histogram uses 50 uniform bins
    over [min, 1].
    """
    if len(profiles) < 2:
        raise ValueError("at least two profiles are required")
    length = len(profiles[0].values)
    id_order = profiles[0].id_order
    stage = profiles[0].stage
    for p in profiles[1:]:
        if len(p.values) != length:
            raise ValueError(
                f"profile length mismatch: {p.model_id!r} has {len(p.values)}, "
                f"expected {length}"
            )
        if p.id_order != id_order:
            raise ValueError(f"profile {p.model_id!r} uses a different id ordering")
        if p.stage != stage:
            raise ValueError(f"profile {p.model_id!r} has stage {p.stage!r}")

    stacked = np.stack([p.values for p in profiles])
    norms = np.linalg.norm(stacked, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("a profile vector has zero magnitude")
    unit = stacked / norms[:, None]
    matrix = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)

    iu, ju = np.triu_indices(len(profiles), k=1)
    off = matrix[iu, ju]
    lo = float(off.min())
    hi = 1.0
    if lo >= hi:
        lo = hi - 1e-12
    counts, edges = np.histogram(off, bins=HISTOGRAM_BINS, range=(lo, hi))
    return ConvergenceStats(
        stage=stage,
        model_ids=tuple(p.model_id for p in profiles),
        matrix=matrix,
        mean=float(off.mean()),
        std=float(off.std()),
        min=float(off.min()),
        max=float(off.max()),
        histogram_edges=edges,
        histogram_counts=counts,
    )


def convergence_report(
    pre_stats: ConvergenceStats, post_stats: ConvergenceStats
) -> dict:
    """Compare inter-model similarity before and after adaptation.

    ``z_min_post`` places the worst post-adaptation similarity on the
    pre-adaptation distribution: (min_post - mean_pre) / std_pre.
    ``spread_ratio`` is std_pre / std_post.
    """
    if pre_stats.std <= 0.0:
        z_min_post = None
    else:
        z_min_post = (post_stats.min - pre_stats.mean) / pre_stats.std
    if post_stats.std <= 0.0:
        spread_ratio = None
    else:
        spread_ratio = pre_stats.std / post_stats.std
    return {
        "pre_mean": pre_stats.mean,
        "pre_std": pre_stats.std,
        "pre_min": pre_stats.min,
        "pre_max": pre_stats.max,
        "post_mean": post_stats.mean,
        "post_std": post_stats.std,
        "post_min": post_stats.min,
        "post_max": post_stats.max,
        "z_min_post": z_min_post,
        "spread_ratio": spread_ratio,
    }
