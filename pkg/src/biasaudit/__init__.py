"""Bias auditing toolkit: pre-training and downstream bias metrics, local
group discovery, bias-transfer rank statistics, representation convergence,
and seeded synthetic bundles for oracle verification."""

from ._kernels import active_backend, set_backend
from .convergence import (
    ConvergenceStats,
    SimilarityProfile,
    convergence_report,
    inter_model_similarity,
    similarity_profile,
)
from .data import (
    AnnotationTable,
    DemographicPartition,
    EmbeddingSet,
    PredictionSet,
    ProtectedAttribute,
    attribute_from_annotations,
    load_annotations,
    load_attribute_schema,
    load_predictions,
    partition_by_demographic,
)
from .downstream import (
    DbaInputs,
    ScoreTable,
    build_dba_inputs,
    dba,
    filter_answers,
    kl_disparity,
    scored_table,
    vqa_score_table,
)
from .embfile import EmbeddingFormatError, read_embeddings, write_embeddings
from .grouping import (
    Clustering,
    Group,
    GroupAssignment,
    global_local_correlation,
    kmeans,
    match_groups,
    per_group_bias,
)
from .leakage import LeakageClassifier, LicResult, lic, train_leakage_classifier
from .rankstats import (
    CorrelationResult,
    GapPoint,
    correlation_sweep,
    gap_quadrants,
    spearman,
)
from .retrieval import (
    RecallVector,
    RetrievalCorpus,
    SkewResult,
    kl_of_recall,
    max_skew_at_k,
    mean_max_skew,
    recall_at_k,
)
from .synth import SynthSpec, gen_predictions, gen_spaces, generate_bundle

__version__ = "0.1.0"

__all__ = [
    "AnnotationTable",
    "Clustering",
    "ConvergenceStats",
    "CorrelationResult",
    "DbaInputs",
    "DemographicPartition",
    "EmbeddingFormatError",
    "EmbeddingSet",
    "GapPoint",
    "Group",
    "GroupAssignment",
    "LeakageClassifier",
    "LicResult",
    "PredictionSet",
    "ProtectedAttribute",
    "RecallVector",
    "RetrievalCorpus",
    "ScoreTable",
    "SimilarityProfile",
    "SkewResult",
    "SynthSpec",
    "active_backend",
    "attribute_from_annotations",
    "build_dba_inputs",
    "convergence_report",
    "correlation_sweep",
    "dba",
    "filter_answers",
    "gap_quadrants",
    "gen_predictions",
    "gen_spaces",
    "generate_bundle",
    "global_local_correlation",
    "inter_model_similarity",
    "kl_disparity",
    "kl_of_recall",
    "kmeans",
    "lic",
    "load_annotations",
    "load_attribute_schema",
    "load_predictions",
    "match_groups",
    "max_skew_at_k",
    "mean_max_skew",
    "partition_by_demographic",
    "per_group_bias",
    "read_embeddings",
    "recall_at_k",
    "scored_table",
    "set_backend",
    "similarity_profile",
    "spearman",
    "train_leakage_classifier",
    "vqa_score_table",
    "write_embeddings",
]
