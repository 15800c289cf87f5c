"""Local views of the data: matched cluster groups across embedding spaces.

k-means runs per model on L2-normalized rows; groups are greedy chained
intersections of maximally overlapping clusters across models, kept when at
least ``min_size`` members survive. Group bias is any pre-training metric
restricted to a group's members, compared against the global value by
Spearman rank correlation across models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from ._common import normalize_rows
from .data import EmbeddingSet
from .rankstats import CorrelationResult, spearman

DEFAULT_K = 6
DEFAULT_MIN_SIZE = 100
DEFAULT_RESTARTS = 8
MAX_LLOYD_ITERATIONS = 300


@dataclass
class Clustering:
    model_id: str
    k: int
    assignment: dict[str, int]
    centroids: np.ndarray
    inertia: float
    seed: int
    n_iterations: int
    inertia_history: tuple[float, ...]

    def members(self, cluster: int) -> frozenset[str]:
        return frozenset(
            sid for sid, c in self.assignment.items() if c == cluster
        )

    def clusters_as_sets(self) -> list[set[str]]:
        out: list[set[str]] = [set() for _ in range(self.k)]
        for sid, c in self.assignment.items():
            out[c].add(sid)
        return out


def _kmeans_plus_plus(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    diffs = points - points[chosen[0]]
    d2 = (diffs * diffs).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        diffs = points - points[idx]
        d2 = np.minimum(d2, (diffs * diffs).sum(axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator):
    centroids = _kmeans_plus_plus(points, k, rng)
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for _ in range(MAX_LLOYD_ITERATIONS):
        iterations += 1
        new_labels, dists = _kernels.nearest_centroid(points, centroids)
        occupied = np.bincount(new_labels, minlength=k) > 0
        if not occupied.all():
            taken = np.zeros(n, dtype=bool)
            for cluster in np.flatnonzero(~occupied):
                candidates = np.where(taken, -np.inf, dists)
                far = int(np.argmax(candidates))
                centroids[cluster] = points[far]
                taken[far] = True
            new_labels, dists = _kernels.nearest_centroid(points, centroids)
        history.append(float(dists.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for cluster in range(k):
            mask = labels == cluster
            if mask.any():
                centroids[cluster] = points[mask].mean(axis=0)
    return labels, centroids, history, iterations


def kmeans(
    embeddings: EmbeddingSet,
    k: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
) -> Clustering:
    """Seeded k-means++ plus Lloyd iterations on L2-normalized rows.

    Rows are processed in ascending id order, so the clustering (as an
    id -> cluster mapping) does not depend on the file's row order. Empty
    clusters are repaired by reseeding to the point farthest from its
    assigned centroid. The best of ``restarts`` seeded initializations by
    final inertia is kept (first one wins ties), so the result stays
    deterministic given (data, k, seed).
    """
    n = len(embeddings)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= number of rows ({n})")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    order = sorted(range(n), key=embeddings.ids.__getitem__)
    ids = [embeddings.ids[i] for i in order]
    points = normalize_rows(embeddings.matrix[order])

    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        run = _lloyd(points, k, np.random.default_rng(child))
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    labels, centroids, history, iterations = best

    return Clustering(
        model_id=embeddings.model_id,
        k=k,
        assignment={sid: int(c) for sid, c in zip(ids, labels)},
        centroids=centroids,
        inertia=history[-1],
        seed=seed,
        n_iterations=iterations,
        inertia_history=tuple(history),
    )


@dataclass
class Group:
    group_id: str
    members: tuple[str, ...]
    clusters: dict[str, int]  # model id -> source cluster index
    tie_broken: tuple[str, ...] = ()  # models where the overlap was tied


@dataclass
class GroupAssignment:
    groups: tuple[Group, ...]
    min_size: int
    reference: str

    def to_json_dict(self) -> dict:
        return {
            "groups": [
                {
                    "id": g.group_id,
                    "members": list(g.members),
                    "clusters": g.clusters,
                }
                for g in self.groups
            ]
        }


def load_groups(path: str | Path) -> GroupAssignment:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    groups = tuple(
        Group(
            group_id=str(g["id"]),
            members=tuple(g["members"]),
            clusters={str(m): int(c) for m, c in g["clusters"].items()},
        )
        for g in raw["groups"]
    )
    return GroupAssignment(groups=groups, min_size=0, reference="")


def save_groups(assignment: GroupAssignment, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(assignment.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def match_groups(
    clusterings: Sequence[Clustering],
    min_size: int = DEFAULT_MIN_SIZE,
    reference: str | None = None,
) -> GroupAssignment:
    """Chain maximally overlapping clusters across models into shared groups.

    Starting from each cluster of the reference clustering (first model id
    lexicographically unless overridden), the chain intersects with the
    maximum-overlap cluster of every remaining clustering in model-id order;
    overlap ties are broken by ascending cluster index and recorded. Chains
    whose final intersection has at least ``min_size`` members become groups,
    emitted in descending size with stable ids.
    """
    if not clusterings:
        raise ValueError("at least one clustering is required")
    by_model = {c.model_id: c for c in clusterings}
    if len(by_model) != len(clusterings):
        raise ValueError("duplicate model ids among clusterings")
    id_sets = {m: frozenset(c.assignment) for m, c in by_model.items()}
    universe = next(iter(id_sets.values()))
    for model, idset in id_sets.items():
        if idset != universe:
            raise ValueError(f"clustering {model!r} covers a different id set")
    models = sorted(by_model)
    ref = reference if reference is not None else models[0]
    if ref not in by_model:
        raise ValueError(f"reference model {ref!r} not among the clusterings")
    others = [m for m in models if m != ref]
    member_sets = {m: by_model[m].clusters_as_sets() for m in models}

    raw: list[tuple[set[str], dict[str, int], list[str], int]] = []
    for ref_cluster in range(by_model[ref].k):
        chain = set(member_sets[ref][ref_cluster])
        sources = {ref: ref_cluster}
        ties: list[str] = []
        for model in others:
            best_overlap = -1
            best_cluster = 0
            tied = False
            for cluster, members in enumerate(member_sets[model]):
                overlap = len(chain & members)
                if overlap > best_overlap:
                    best_overlap = overlap
                    best_cluster = cluster
                    tied = False
                elif overlap == best_overlap:
                    tied = True
            if tied:
                ties.append(model)
            sources[model] = best_cluster
            chain &= member_sets[model][best_cluster]
            if not chain:
                break
        if len(chain) >= min_size:
            raw.append((chain, sources, ties, ref_cluster))

    raw.sort(key=lambda item: (-len(item[0]), item[3]))
    groups = tuple(
        Group(
            group_id=f"g{i:02d}",
            members=tuple(sorted(chain)),
            clusters=sources,
            tie_broken=tuple(ties),
        )
        for i, (chain, sources, ties, _) in enumerate(raw)
    )
    return GroupAssignment(groups=groups, min_size=min_size, reference=ref)


def per_group_bias(
    assignment: GroupAssignment,
    metric_by_model: Mapping[str, Callable[[Sequence[str]], float | None]],
) -> dict[str, dict[str, float | None]]:
    """Evaluate a bias metric restricted to each group's members, per model.

    Undefined entries (e.g. a group missing a demographic) stay None."""
    table: dict[str, dict[str, float | None]] = {}
    for group in assignment.groups:
        row: dict[str, float | None] = {}
        for model in sorted(metric_by_model):
            row[model] = metric_by_model[model](group.members)
        table[group.group_id] = row
    return table


GLOBAL_KEY = "global"


def global_local_correlation(
    global_values: Mapping[str, float | None],
    local_values: Mapping[str, Mapping[str, float | None]],
    method: str = "auto",
    seed: int = 0,
) -> dict[str, CorrelationResult]:
    """Spearman correlation of each group's per-model bias against the global
    per-model bias. Undefined model values are dropped pairwise; the
    global-vs-global entry is reported as rho = 1 for reference."""
    n_defined = sum(1 for v in global_values.values() if v is not None)
    out: dict[str, CorrelationResult] = {
        GLOBAL_KEY: CorrelationResult(
            rho=1.0, p=0.0, n=n_defined, method="t-approx",
            x_label=GLOBAL_KEY, y_label=GLOBAL_KEY,
        )
    }
    for group_id in sorted(local_values):
        xs, ys = [], []
        for model in sorted(global_values):
            gv = global_values[model]
            lv = local_values[group_id].get(model)
            if gv is None or lv is None:
                continue
            xs.append(gv)
            ys.append(lv)
        if len(xs) < 3:
            out[group_id] = CorrelationResult(
                rho=None, p=None, n=len(xs), method="t-approx",
                x_label=GLOBAL_KEY, y_label=group_id,
                reason=f"only {len(xs)} models with defined values",
            )
            continue
        out[group_id] = spearman(
            xs, ys, method=method, seed=seed,
            x_label=GLOBAL_KEY, y_label=group_id,
        )
    return out
