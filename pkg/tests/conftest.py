import numpy as np
import pytest

from biasaudit import (
    AnnotationTable,
    DemographicPartition,
    EmbeddingSet,
    ProtectedAttribute,
)


@pytest.fixture
def gender():
    return ProtectedAttribute("gender", ("female", "male"))


def make_embeddings(ids, matrix, model_id="model"):
    return EmbeddingSet(model_id, tuple(ids), np.asarray(matrix, dtype=np.float32))


def make_partition(attribute, buckets, excluded=0, missing=0):
    return DemographicPartition(
        attribute=attribute,
        buckets={d: frozenset(buckets.get(d, ())) for d in attribute.demographics},
        excluded=excluded,
        missing=missing,
    )


def make_annotations(attribute, labels):
    rows = {sid: {attribute.name: demo} for sid, demo in labels.items()}
    return AnnotationTable(rows=rows, attributes=(attribute.name,))


@pytest.fixture
def helpers():
    class Helpers:
        embeddings = staticmethod(make_embeddings)
        partition = staticmethod(make_partition)
        annotations = staticmethod(make_annotations)

    return Helpers
