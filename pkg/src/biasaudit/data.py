"""Core records: protected attributes, embeddings, annotations, predictions.

All types are immutable after construction and safe to share across workers.
Sample identifiers are opaque strings and joins are identifier-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class ProtectedAttribute:
    """A named attribute with a fixed, ordered list of demographic labels.

    The ordering is fixed at load time and used for every reported vector.
    """

    name: str
    demographics: tuple[str, ...]

    def __post_init__(self):
        if not self.name:
            raise ValueError("attribute name must be non-empty")
        demos = tuple(self.demographics)
        object.__setattr__(self, "demographics", demos)
        if len(demos) < 2:
            raise ValueError(f"attribute {self.name!r} needs at least two demographics")
        if any(not d for d in demos):
            raise ValueError(f"attribute {self.name!r} has an empty demographic label")
        if len(set(demos)) != len(demos):
            raise ValueError(f"attribute {self.name!r} has duplicate demographics")

    def index_of(self, demographic: str) -> int:
        return self.demographics.index(demographic)


def load_attribute_schema(path: str | Path) -> dict[str, ProtectedAttribute]:
    """Read an attribute schema JSON file, preserving declaration order."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or "attributes" not in raw:
        raise ValueError(f"{path}: schema must be an object with an 'attributes' list")
    schema: dict[str, ProtectedAttribute] = {}
    for entry in raw["attributes"]:
        attr = ProtectedAttribute(entry["name"], tuple(entry["demographics"]))
        if attr.name in schema:
            raise ValueError(f"{path}: duplicate attribute {attr.name!r}")
        schema[attr.name] = attr
    return schema


@dataclass
class EmbeddingSet:
    """A model's embedding matrix with stable per-row sample identifiers."""

    model_id: str
    ids: tuple[str, ...]
    matrix: np.ndarray  # (n, dim) float32, read-only

    def __post_init__(self):
        self.ids = tuple(self.ids)
        mat = np.asarray(self.matrix, dtype=np.float32)
        if mat.ndim != 2:
            raise ValueError("embedding matrix must be 2-dimensional")
        if mat.shape[0] != len(self.ids):
            raise ValueError(
                f"row count {mat.shape[0]} does not match id count {len(self.ids)}"
            )
        if mat.shape[1] < 1:
            raise ValueError("embedding dimension must be at least 1")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate sample identifiers")
        if mat.size and not np.all(np.isfinite(mat)):
            raise ValueError("embedding matrix contains non-finite values")
        mat = np.ascontiguousarray(mat)
        mat.setflags(write=False)
        self.matrix = mat
        self._index = {sid: i for i, sid in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def index_of(self, sample_id: str) -> int:
        try:
            return self._index[sample_id]
        except KeyError:
            raise KeyError(f"unknown sample id {sample_id!r} in {self.model_id!r}")

    def row(self, sample_id: str) -> np.ndarray:
        return self.matrix[self.index_of(sample_id)]

    def subset(self, sample_ids: Iterable[str]) -> "EmbeddingSet":
        wanted = tuple(sample_ids)
        rows = [self.index_of(sid) for sid in wanted]
        return EmbeddingSet(self.model_id, wanted, self.matrix[rows].copy())


@dataclass
class AnnotationTable:
    """Per-sample protected-attribute labels keyed by sample identifier."""

    rows: dict[str, dict[str, str]]
    attributes: tuple[str, ...]

    def __post_init__(self):
        self.attributes = tuple(self.attributes)

    def __len__(self) -> int:
        return len(self.rows)

    def label(self, sample_id: str, attribute: str) -> str | None:
        row = self.rows.get(sample_id)
        if row is None:
            return None
        return row.get(attribute)


def load_annotations(
    path: str | Path,
    schema: Mapping[str, ProtectedAttribute] | None = None,
) -> AnnotationTable:
    """Read a JSON-lines annotation file.

    With a schema, every referenced attribute and label must be declared. A
    sample may lack labels for some attributes; it is simply excluded when
    partitioning on those attributes.
    """
    rows: dict[str, dict[str, str]] = {}
    observed: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            sid = obj.get("id")
            if not isinstance(sid, str) or not sid:
                raise ValueError(f"{path}:{lineno}: missing or invalid 'id'")
            if sid in rows:
                raise ValueError(f"{path}:{lineno}: duplicate sample id {sid!r}")
            attrs = obj.get("attributes", {})
            if not isinstance(attrs, dict):
                raise ValueError(f"{path}:{lineno}: 'attributes' must be an object")
            clean: dict[str, str] = {}
            for name, label in attrs.items():
                if not isinstance(label, str):
                    raise ValueError(
                        f"{path}:{lineno}: label for {name!r} must be a string"
                    )
                if schema is not None:
                    if name not in schema:
                        raise ValueError(
                            f"{path}:{lineno}: attribute {name!r} not in schema"
                        )
                    if label not in schema[name].demographics:
                        raise ValueError(
                            f"{path}:{lineno}: label {label!r} not a demographic "
                            f"of {name!r}"
                        )
                observed.add(name)
                clean[name] = label
            rows[sid] = clean
    if schema is not None:
        known = tuple(schema.keys())
    else:
        known = tuple(sorted(observed))
    return AnnotationTable(rows=rows, attributes=known)


def attribute_from_annotations(table: AnnotationTable, name: str) -> ProtectedAttribute:
    """Build an attribute from observed labels (sorted order) when no schema exists."""
    labels = sorted(
        {row[name] for row in table.rows.values() if name in row}
    )
    if len(labels) < 2:
        raise ValueError(
            f"attribute {name!r} has fewer than two observed demographics"
        )
    return ProtectedAttribute(name, tuple(labels))


@dataclass(frozen=True)
class DemographicPartition:
    """Disjoint per-demographic buckets of sample ids for one attribute.

    ``excluded`` counts annotated samples lacking a label for the attribute;
    ``missing`` counts requested ids absent from the annotation table.
    """

    attribute: ProtectedAttribute
    buckets: dict[str, frozenset[str]]
    excluded: int
    missing: int

    def bucket_ids_sorted(self, demographic: str) -> list[str]:
        return sorted(self.buckets[demographic])

    def annotated_ids_sorted(self) -> list[str]:
        out: set[str] = set()
        for members in self.buckets.values():
            out |= members
        return sorted(out)

    def demographic_of(self, sample_id: str) -> str | None:
        for demo, members in self.buckets.items():
            if sample_id in members:
                return demo
        return None


def partition_by_demographic(
    annotations: AnnotationTable,
    attribute: ProtectedAttribute,
    ids: Iterable[str],
) -> DemographicPartition:
    """Group sample ids by their label for one attribute.

    Samples with no label for the attribute are excluded, never bucketed as
    "unknown".
    """
    if attribute.name not in annotations.attributes:
        raise ValueError(f"attribute {attribute.name!r} unknown to the annotation table")
    buckets: dict[str, set[str]] = {d: set() for d in attribute.demographics}
    excluded = 0
    missing = 0
    for sid in set(ids):
        row = annotations.rows.get(sid)
        if row is None:
            missing += 1
            continue
        label = row.get(attribute.name)
        if label is None:
            excluded += 1
            continue
        if label not in buckets:
            raise ValueError(
                f"label {label!r} of sample {sid!r} is not a demographic of "
                f"{attribute.name!r}"
            )
        buckets[label].add(sid)
    return DemographicPartition(
        attribute=attribute,
        buckets={d: frozenset(s) for d, s in buckets.items()},
        excluded=excluded,
        missing=missing,
    )


# ---------------------------------------------------------------------------
# prediction records
# ---------------------------------------------------------------------------

TASK_VQA = "vqa"
TASK_CAPTIONING = "captioning"
TASK_SCORED = "scored"
TASKS = (TASK_VQA, TASK_CAPTIONING, TASK_SCORED)

ORIGIN_GT = "gt"
ORIGIN_PRED = "pred"


@dataclass(frozen=True)
class VqaRecord:
    sample_id: str
    question_id: str
    question: str | None
    predicted: str | None
    truths: tuple[str, ...] | None  # multiset of ground-truth answers


@dataclass(frozen=True)
class CaptionRecord:
    sample_id: str
    caption: str
    origin: str  # "gt" | "pred"


@dataclass(frozen=True)
class ScoredRecord:
    sample_id: str
    metric: str
    value: float


@dataclass
class PredictionSet:
    """Per-sample downstream outputs for one task."""

    task: str
    entries: tuple

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        self.entries = tuple(self.entries)
        if self.task == TASK_VQA:
            seen = set()
            for e in self.entries:
                key = (e.sample_id, e.question_id)
                if key in seen:
                    raise ValueError(f"duplicate vqa entry for {key}")
                seen.add(key)
                if e.truths is not None and len(e.truths) == 0:
                    raise ValueError(
                        f"vqa entry {key} has an empty ground-truth answer multiset"
                    )
        elif self.task == TASK_SCORED:
            for e in self.entries:
                if not math.isfinite(e.value):
                    raise ValueError(
                        f"scored entry ({e.sample_id}, {e.metric}) is non-finite"
                    )
        elif self.task == TASK_CAPTIONING:
            for e in self.entries:
                if e.origin not in (ORIGIN_GT, ORIGIN_PRED):
                    raise ValueError(
                        f"caption entry for {e.sample_id!r} has origin {e.origin!r}"
                    )

    def __len__(self) -> int:
        return len(self.entries)


def load_predictions(path: str | Path, task: str) -> PredictionSet:
    """Read a JSON-lines prediction file for the given task."""
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                entries.append(_parse_prediction(obj, task))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return PredictionSet(task=task, entries=tuple(entries))


def _parse_prediction(obj: dict, task: str):
    if task == TASK_VQA:
        truths = obj.get("gt")
        if truths is not None:
            truths = tuple(str(t) for t in truths)
        pred = obj.get("pred")
        return VqaRecord(
            sample_id=str(obj["id"]),
            question_id=str(obj["qid"]),
            question=obj.get("question"),
            predicted=None if pred is None else str(pred),
            truths=truths,
        )
    if task == TASK_CAPTIONING:
        return CaptionRecord(
            sample_id=str(obj["id"]),
            caption=str(obj["caption"]),
            origin=str(obj["origin"]),
        )
    value = float(obj["value"])
    return ScoredRecord(
        sample_id=str(obj["id"]),
        metric=str(obj["metric"]),
        value=value,
    )
