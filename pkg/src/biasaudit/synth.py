"""Seeded generators of synthetic audit bundles with planted, known bias.

Every generator draws from named PCG64 substreams spawned off a single
64-bit seed, so a bundle is byte-identical across runs of the same seed.
Planted quantities are constructed from integer counts so the expected metric
values shipped in ``expected.json`` are exact up to float evaluation of the
closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from ._common import kl_vs_uniform
from .data import AnnotationTable, EmbeddingSet, ProtectedAttribute
from .embfile import write_embeddings

_STREAMS = (
    "base", "target", "rotations", "offsets", "prenoise", "postnoise",
    "annotations", "skew", "captions", "ranks",
)

_CAPTION_TEMPLATES = (
    "a person sitting on a bench in the park",
    "someone riding a bicycle down a quiet street",
    "a person reading a book near the window",
    "someone walking a dog along the river",
    "a person cooking dinner in a small kitchen",
    "someone playing chess at a wooden table",
    "a person waiting for the bus in the rain",
    "someone watering plants on a balcony",
)

_VQA_ANSWER_POOL = ("lamp", "tree", "chair", "stone", "cloud", "river")
_DBA_ANSWERS = ("fern", "moss")
_LEAK_TOKENS = ("zephyr", "quartz", "ember", "willow")

LEAK_SIDES = ("pred", "gt", "both", "none")


@dataclass
class SynthSpec:
    """Knobs for one synthetic bundle."""

    seed: int = 0
    samples: int = 240
    dim: int = 32
    models: int = 5
    concepts: int = 5
    separation: float = 6.0
    noise: float = 0.25
    attribute: str = "cohort"
    proportions: dict[str, float] = field(
        default_factory=lambda: {"alpha": 0.5, "beta": 0.5}
    )
    recall_base: float = 0.6
    recall_gap: float = 0.25
    recall_k: int = 5
    skew_k: int = 50
    accuracy_base: float = 0.7
    amplification: float = 0.25
    leak_rate: float = 0.3
    leak_side: str = "pred"
    model_variation: float = 0.35  # per-model concept-geometry spread
    convergence_strength: float = 0.9  # blend weight toward the shared target
    post_noise: float = 0.3  # fresh post-stage noise, relative to `noise`

    def __post_init__(self):
        if abs(sum(self.proportions.values()) - 1.0) > 1e-9:
            raise ValueError("demographic proportions must sum to 1")
        if any(p <= 0 for p in self.proportions.values()):
            raise ValueError("demographic proportions must be positive")
        if len(self.proportions) < 2:
            raise ValueError("at least two demographics are required")
        if not 0.0 <= self.convergence_strength <= 1.0:
            raise ValueError("convergence_strength must lie in [0, 1]")
        if self.separation <= 0:
            raise ValueError("separation must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.leak_side not in LEAK_SIDES:
            raise ValueError(f"leak_side must be one of {LEAK_SIDES}")
        if not 0 <= self.leak_rate <= 1:
            raise ValueError("leak_rate must lie in [0, 1]")
        if self.models < 1 or self.samples < 2 or self.dim < 2 or self.concepts < 1:
            raise ValueError("models/samples/dim/concepts out of range")

    @property
    def demographics(self) -> tuple[str, ...]:
        return tuple(self.proportions)

    @property
    def protected_attribute(self) -> ProtectedAttribute:
        return ProtectedAttribute(self.attribute, self.demographics)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        return cls(**raw)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _streams(spec: SynthSpec) -> dict[str, np.random.SeedSequence]:
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(len(_STREAMS))
    return dict(zip(_STREAMS, children))


def _rng(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.default_rng(seq)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _apportion(total: int, proportions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of `total` into integer counts."""
    raw = [total * p for p in proportions]
    counts = [int(math.floor(r)) for r in raw]
    short = total - sum(counts)
    remainders = sorted(
        range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i)
    )
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def _rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    mat = rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(mat)
    return q * np.sign(np.diag(r))


def sample_ids(spec: SynthSpec) -> list[str]:
    return [f"s{i:05d}" for i in range(spec.samples)]


def model_ids(spec: SynthSpec) -> list[str]:
    return [f"m{i:02d}" for i in range(spec.models)]


# ---------------------------------------------------------------------------
# embedding spaces
# ---------------------------------------------------------------------------


def gen_spaces(spec: SynthSpec) -> tuple[list[EmbeddingSet], list[EmbeddingSet]]:
    """Per-model pre and post embedding spaces.

    Each model sees the same planted concept clusters but arranges them with
    its own geometry (per-concept offsets plus a rotation), which spreads the
    inter-model similarity of the pre stage. Post spaces blend each model's
    arrangement toward one shared target inside the model's own frame, so at
    full strength every post space has the target's pairwise geometry.
    """
    streams = _streams(spec)
    ids = sample_ids(spec)
    lam = spec.convergence_strength
    concept_of = np.arange(spec.samples) % spec.concepts
    # the first concept is deliberately wide: when clustered with one extra
    # centroid, every model splits this concept rather than an arbitrary one,
    # so the remaining concepts stay recoverable across models
    spread = np.where(concept_of == 0, 3.0, 1.0)[:, None]

    def planted(rng: np.random.Generator) -> np.ndarray:
        centers = rng.normal(size=(spec.concepts, spec.dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        centers *= spec.separation
        return centers[concept_of] + spec.noise * spread * rng.normal(
            size=(spec.samples, spec.dim)
        )

    base = planted(_rng(streams["base"]))
    target = planted(_rng(streams["target"]))

    rot_seqs = streams["rotations"].spawn(spec.models)
    offset_seqs = streams["offsets"].spawn(spec.models)
    pre_seqs = streams["prenoise"].spawn(spec.models)
    post_seqs = streams["postnoise"].spawn(spec.models)

    pre_sets, post_sets = [], []
    for m, model in enumerate(model_ids(spec)):
        rotation = _rotation(_rng(rot_seqs[m]), spec.dim)
        offsets = (
            spec.model_variation
            * spec.separation
            * _rng(offset_seqs[m]).normal(size=(spec.concepts, spec.dim))
        )
        jitter = spec.noise * spread * _rng(pre_seqs[m]).normal(
            size=(spec.samples, spec.dim)
        )
        pre_raw = base + offsets[concept_of] + jitter
        fresh = (
            spec.post_noise
            * spec.noise
            * _rng(post_seqs[m]).normal(size=(spec.samples, spec.dim))
        )
        post_raw = (1.0 - lam) * pre_raw + lam * target + fresh
        pre_sets.append(
            EmbeddingSet(model, tuple(ids), (pre_raw @ rotation).astype(np.float32))
        )
        post_sets.append(
            EmbeddingSet(model, tuple(ids), (post_raw @ rotation).astype(np.float32))
        )
    return pre_sets, post_sets


# ---------------------------------------------------------------------------
# demographics
# ---------------------------------------------------------------------------


def gen_annotations(spec: SynthSpec) -> tuple[list[dict], dict[str, str]]:
    """Annotation rows and the id -> demographic map for the planted samples."""
    ids = sample_ids(spec)
    demos = spec.demographics
    counts = _apportion(spec.samples, [spec.proportions[d] for d in demos])
    perm = _rng(_streams(spec)["annotations"]).permutation(spec.samples)
    demo_of: dict[str, str] = {}
    cursor = 0
    for demo, count in zip(demos, counts):
        for pos in perm[cursor : cursor + count]:
            demo_of[ids[pos]] = demo
        cursor += count
    rows = [
        {"id": sid, "attributes": {spec.attribute: demo_of[sid]}}
        for sid in ids
    ]
    return rows, demo_of


def _interp_factors(n_demos: int) -> list[float]:
    # +0.5 for the first demographic down to -0.5 for the last
    if n_demos == 1:
        return [0.0]
    return [0.5 - d / (n_demos - 1) for d in range(n_demos)]


def _spearman_of_permutations(a: Sequence[int], b: Sequence[int]) -> float:
    # exact closed form, valid because permutations have no ties
    n = len(a)
    d2 = sum((int(x) - int(y)) ** 2 for x, y in zip(a, b))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def rank_permutations(spec: SynthSpec) -> tuple[list[int], list[int]]:
    """Two permutations of model ranks whose pairwise Spearman correlation
    with each other and with the identity stays at or below 0.5, so every
    non-planted sweep combination is guaranteed below the 0.7 threshold."""
    n = spec.models
    identity = list(range(n))
    if n < 3:
        return identity, identity
    rng = _rng(_streams(spec)["ranks"])

    def draw(constraints: list[list[int]]) -> list[int]:
        for _ in range(100_000):
            cand = [int(v) for v in rng.permutation(n)]
            if all(
                abs(_spearman_of_permutations(cand, other)) <= 0.5
                for other in constraints
            ):
                return cand
        raise RuntimeError("could not find a low-correlation rank permutation")

    first = draw([identity])
    second = draw([identity, first])
    return first, second


# ---------------------------------------------------------------------------
# retrieval (recall and its KL disparity)
# ---------------------------------------------------------------------------


@dataclass
class RetrievalPart:
    texts: dict[str, EmbeddingSet]  # model id -> text embeddings
    pairs: dict[str, list[str]]
    expected_recall: dict[str, dict[str, float]]  # model -> demo -> recall
    expected_kl: dict[str, float]


def gen_retrieval(
    spec: SynthSpec,
    pre_spaces: Sequence[EmbeddingSet],
    demo_of: dict[str, str],
) -> RetrievalPart:
    """Plant per-demographic recall ladders: a "hit" image's correct text is
    the image vector itself (rank 1 with certainty) and a "miss" image's
    correct text is its negation (last rank with certainty)."""
    demos = spec.demographics
    factors = _interp_factors(len(demos))
    buckets = {
        d: sorted(sid for sid, demo in demo_of.items() if demo == d)
        for d in demos
    }
    expected_recall: dict[str, dict[str, float]] = {}
    expected_kl: dict[str, float] = {}
    texts: dict[str, EmbeddingSet] = {}
    pairs = {sid: [f"t{sid}"] for sid in sample_ids(spec)}

    for m, space in enumerate(pre_spaces):
        asym = spec.recall_gap * (m + 1) / spec.models
        hit_ids: set[str] = set()
        recalls: dict[str, float] = {}
        for demo, factor in zip(demos, factors):
            members = buckets[demo]
            planted = spec.recall_base + asym * factor
            if not 0.0 <= planted <= 1.0:
                raise ValueError(
                    f"planted recall {planted:.3f} for {demo!r} is outside [0, 1]; "
                    "lower recall_gap or move recall_base"
                )
            hits = _round_half_up(planted * len(members))
            hit_ids.update(members[:hits])
            recalls[demo] = hits / len(members) if members else 0.0
        matrix = np.empty_like(space.matrix)
        for i, sid in enumerate(space.ids):
            matrix[i] = space.matrix[i] if sid in hit_ids else -space.matrix[i]
        text_ids = tuple(f"t{sid}" for sid in space.ids)
        texts[space.model_id] = EmbeddingSet(space.model_id, text_ids, matrix)
        expected_recall[space.model_id] = recalls
        planted_kl = kl_vs_uniform([recalls[d] for d in demos])
        if planted_kl is None:
            raise ValueError(
                "planted recalls collapsed to zero; raise recall_base or samples"
            )
        expected_kl[space.model_id] = planted_kl

    kl_values = [expected_kl[m] for m in sorted(expected_kl)]
    if spec.models > 1 and any(
        b <= a for a, b in zip(kl_values, kl_values[1:])
    ):
        raise ValueError(
            "planted recall ladder is not strictly increasing; adjust samples, "
            "recall_base, or recall_gap"
        )
    return RetrievalPart(
        texts=texts,
        pairs=pairs,
        expected_recall=expected_recall,
        expected_kl=expected_kl,
    )


# ---------------------------------------------------------------------------
# prompt-retrieval skew
# ---------------------------------------------------------------------------


@dataclass
class SkewPart:
    faces: dict[str, EmbeddingSet]
    prompts: dict[str, EmbeddingSet]
    annotation_rows: list[dict]
    expected: dict[str, float]
    k: int


def gen_skew(
    spec: SynthSpec, order: Sequence[int] | None = None
) -> SkewPart:
    """Plant a top-k demographic mix per model. The first demographic's top-k
    count follows a ladder ordered by `order` (a permutation of model ranks),
    so the realized MaxSkew values realize exactly those ranks."""
    demos = spec.demographics
    n_demos = len(demos)
    k = spec.skew_k
    if order is None:
        order = list(range(spec.models))
    if spec.models > k - k // n_demos:
        raise ValueError("skew_k is too small for this many models")

    per_demo = k  # faces per demographic; ideal share is uniform
    total = per_demo * n_demos
    ids = [f"f{i:04d}" for i in range(total)]
    demo_of = {ids[i]: demos[i // per_demo] for i in range(total)}
    rows = [
        {"id": fid, "attributes": {spec.attribute: demo_of[fid]}} for fid in ids
    ]

    rng_seqs = _streams(spec)["skew"].spawn(spec.models)
    faces: dict[str, EmbeddingSet] = {}
    prompts: dict[str, EmbeddingSet] = {}
    expected: dict[str, float] = {}
    for m, model in enumerate(model_ids(spec)):
        rng = _rng(rng_seqs[m])
        prompt = rng.normal(size=spec.dim)
        prompt /= np.linalg.norm(prompt)

        boosted = k // n_demos + (order[m] + 1)
        remaining = _apportion(k - boosted, [1.0 / (n_demos - 1)] * (n_demos - 1))
        top_counts = [boosted] + remaining
        top_ids: list[str] = []
        for d, count in enumerate(top_counts):
            members = ids[d * per_demo : (d + 1) * per_demo]
            top_ids.extend(members[:count])

        top_set = set(top_ids)
        matrix = np.empty((total, spec.dim), dtype=np.float64)
        top_rank = 0
        for i, fid in enumerate(ids):
            if fid in top_set:
                sim = 0.9 - 0.2 * top_rank / max(k, 1)
                top_rank += 1
            else:
                sim = 0.1 - 0.05 * i / total
            ortho = rng.normal(size=spec.dim)
            ortho -= (ortho @ prompt) * prompt
            ortho /= np.linalg.norm(ortho)
            matrix[i] = sim * prompt + math.sqrt(1.0 - sim * sim) * ortho
        faces[model] = EmbeddingSet(model, tuple(ids), matrix.astype(np.float32))
        prompts[model] = EmbeddingSet(
            model, ("p000",), prompt.astype(np.float32)[None, :]
        )
        expected[model] = math.log((boosted / k) * n_demos)
    return SkewPart(
        faces=faces, prompts=prompts, annotation_rows=rows, expected=expected, k=k
    )


# ---------------------------------------------------------------------------
# VQA accuracy disparity
# ---------------------------------------------------------------------------


@dataclass
class VqaPart:
    gt_rows: list[dict]
    pred_rows: dict[str, list[dict]]
    expected_accuracy: dict[str, dict[str, float]]
    expected_kl: dict[str, float]


def gen_vqa(spec: SynthSpec, demo_of: dict[str, str]) -> VqaPart:
    """Plant per-demographic VQA accuracy ladders with {0, 1} per-question
    scores, so soft and hard accuracy agree exactly."""
    demos = spec.demographics
    factors = _interp_factors(len(demos))
    buckets = {
        d: sorted(sid for sid, demo in demo_of.items() if demo == d)
        for d in demos
    }
    ids = sample_ids(spec)
    qid_of = {sid: f"q{i:05d}" for i, sid in enumerate(ids)}
    answer_of = {
        sid: _VQA_ANSWER_POOL[i % len(_VQA_ANSWER_POOL)]
        for i, sid in enumerate(ids)
    }
    gt_rows = [
        {
            "id": sid,
            "qid": qid_of[sid],
            "question": "what object is shown",
            "gt": [answer_of[sid]] * 3,
        }
        for sid in ids
    ]

    pred_rows: dict[str, list[dict]] = {}
    expected_accuracy: dict[str, dict[str, float]] = {}
    expected_kl: dict[str, float] = {}
    for m, model in enumerate(model_ids(spec)):
        step = m + 1
        correct_ids: set[str] = set()
        accs: dict[str, float] = {}
        for demo, factor in zip(demos, factors):
            members = buckets[demo]
            base = _round_half_up(spec.accuracy_base * len(members))
            n_correct = base + int(round(2 * factor)) * step
            if not 0 <= n_correct <= len(members):
                raise ValueError(
                    "planted accuracy ladder leaves the [0, 1] range; "
                    "use more samples or fewer models"
                )
            correct_ids.update(members[:n_correct])
            accs[demo] = n_correct / len(members)
        rows = []
        for sid in ids:
            truth = answer_of[sid]
            wrong = _VQA_ANSWER_POOL[
                (_VQA_ANSWER_POOL.index(truth) + 1) % len(_VQA_ANSWER_POOL)
            ]
            rows.append(
                {
                    "id": sid,
                    "qid": qid_of[sid],
                    "pred": truth if sid in correct_ids else wrong,
                }
            )
        pred_rows[model] = rows
        expected_accuracy[model] = accs
        planted_kl = kl_vs_uniform([accs[d] for d in demos])
        if planted_kl is None:
            raise ValueError("planted accuracies collapsed to zero")
        expected_kl[model] = planted_kl

    kl_values = [expected_kl[m] for m in sorted(expected_kl)]
    if spec.models > 1 and any(
        b <= a for a, b in zip(kl_values, kl_values[1:])
    ):
        raise ValueError(
            "planted accuracy ladder is not strictly increasing; adjust samples "
            "or accuracy_base"
        )
    return VqaPart(
        gt_rows=gt_rows,
        pred_rows=pred_rows,
        expected_accuracy=expected_accuracy,
        expected_kl=expected_kl,
    )


# ---------------------------------------------------------------------------
# directional amplification
# ---------------------------------------------------------------------------


@dataclass
class DbaPart:
    gt_rows: list[dict]
    pred_rows: dict[str, list[dict]]
    expected: dict[str, float]


def gen_dba(
    spec: SynthSpec,
    demo_of: dict[str, str],
    order: Sequence[int] | None = None,
) -> DbaPart:
    """Plant amplification over the first two demographics and two answers.

    Ground truth associates each demographic with one majority answer at a
    3:1 ratio; predictions push the majority share up by j/n, which makes the
    exact amplification value j/n by the closed form of the cell sums.
    """
    demos = spec.demographics[:2]
    if order is None:
        order = list(range(spec.models))
    buckets = [
        sorted(sid for sid, demo in demo_of.items() if demo == d) for d in demos
    ]
    n = 4 * (min(len(b) for b in buckets) // 4)
    if n == 0:
        raise ValueError("not enough samples per demographic for amplification")
    max_step = n // 4
    steps = []
    for m in range(spec.models):
        if spec.amplification == 0.0:
            steps.append(0)
            continue
        j = _round_half_up(spec.amplification * n * (order[m] + 1) / spec.models)
        steps.append(min(max(j, 1), max_step))
    if spec.amplification > 0.0 and len(set(steps)) != spec.models:
        raise ValueError(
            "planted amplification ladder has collisions; use more samples or "
            "fewer models"
        )

    gt_rows = []
    answer_gt: dict[str, str] = {}
    used: list[list[str]] = []
    for d, demo in enumerate(demos):
        members = buckets[d][:n]
        used.append(members)
        majority, minority = _DBA_ANSWERS[d % 2], _DBA_ANSWERS[(d + 1) % 2]
        for i, sid in enumerate(members):
            answer = majority if i < 3 * n // 4 else minority
            answer_gt[sid] = answer
            gt_rows.append(
                {
                    "id": sid,
                    "qid": f"d{d}{i:05d}",
                    "question": "which plant is shown",
                    "gt": [answer] * 3,
                }
            )
    qid_of = {row["id"]: row["qid"] for row in gt_rows}

    pred_rows: dict[str, list[dict]] = {}
    expected: dict[str, float] = {}
    for m, model in enumerate(model_ids(spec)):
        j = steps[m]
        rows = []
        for d, members in enumerate(used):
            majority = _DBA_ANSWERS[d % 2]
            minority = _DBA_ANSWERS[(d + 1) % 2]
            for i, sid in enumerate(members):
                pred = majority if i < 3 * n // 4 + j else minority
                rows.append({"id": sid, "qid": qid_of[sid], "pred": pred})
        pred_rows[model] = rows
        expected[model] = j / n
    return DbaPart(gt_rows=gt_rows, pred_rows=pred_rows, expected=expected)


# ---------------------------------------------------------------------------
# captions with a planted leak
# ---------------------------------------------------------------------------


@dataclass
class CaptionsPart:
    gt_rows: list[dict]
    pred_rows: list[dict]
    expected_sign: int  # sign of the planted leakage difference


def gen_captions(spec: SynthSpec, demo_of: dict[str, str]) -> CaptionsPart:
    """Neutral template captions; the configured side gets a demographic-
    specific marker token appended at the planted leak rate."""
    demos = spec.demographics
    if len(demos) > len(_LEAK_TOKENS):
        tokens = tuple(f"markerword{d}" for d in range(len(demos)))
    else:
        tokens = _LEAK_TOKENS[: len(demos)]
    token_of = dict(zip(demos, tokens))
    rng = _rng(_streams(spec)["captions"])

    def caption_rows(origin: str, leak: bool) -> list[dict]:
        rows = []
        for sid in sorted(demo_of):
            text = _CAPTION_TEMPLATES[int(rng.integers(len(_CAPTION_TEMPLATES)))]
            if leak and rng.random() < spec.leak_rate:
                text = f"{text} {token_of[demo_of[sid]]}"
            rows.append({"id": sid, "caption": text, "origin": origin})
        return rows

    leak_gt = spec.leak_side in ("gt", "both")
    leak_pred = spec.leak_side in ("pred", "both")
    gt_rows = caption_rows("gt", leak_gt)
    pred_rows = caption_rows("pred", leak_pred)
    if spec.leak_rate == 0.0 or leak_gt == leak_pred:
        sign = 0
    else:
        sign = 1 if leak_pred else -1
    return CaptionsPart(gt_rows=gt_rows, pred_rows=pred_rows, expected_sign=sign)


# ---------------------------------------------------------------------------
# whole bundles
# ---------------------------------------------------------------------------


@dataclass
class PredictionBundle:
    """In-memory view of the planted prediction data for one bundle."""

    annotations: AnnotationTable
    attribute: ProtectedAttribute
    vqa: VqaPart
    dba: DbaPart
    captions: CaptionsPart
    retrieval: RetrievalPart


def gen_predictions(spec: SynthSpec) -> PredictionBundle:
    """Generate prediction-side data with known metric ground truth."""
    rows, demo_of = gen_annotations(spec)
    table = AnnotationTable(
        rows={r["id"]: dict(r["attributes"]) for r in rows},
        attributes=(spec.attribute,),
    )
    pre_spaces, _ = gen_spaces(spec)
    skew_order, dba_order = rank_permutations(spec)
    return PredictionBundle(
        annotations=table,
        attribute=spec.protected_attribute,
        vqa=gen_vqa(spec, demo_of),
        dba=gen_dba(spec, demo_of, order=dba_order),
        captions=gen_captions(spec, demo_of),
        retrieval=gen_retrieval(spec, pre_spaces, demo_of),
    )


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _dump_jsonl(rows: list[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def generate_bundle(spec: SynthSpec, outdir: str | Path) -> dict:
    """Write a complete audit bundle plus expected.json and manifest.json.

    Identical specs produce byte-identical trees.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    annotation_rows, demo_of = gen_annotations(spec)
    pre_spaces, post_spaces = gen_spaces(spec)
    skew_order, dba_order = rank_permutations(spec)
    retrieval = gen_retrieval(spec, pre_spaces, demo_of)
    skew = gen_skew(spec, order=skew_order)
    vqa = gen_vqa(spec, demo_of)
    dba_part = gen_dba(spec, demo_of, order=dba_order)
    captions = gen_captions(spec, demo_of)

    models = model_ids(spec)
    files: dict[str, object] = {
        "attributes": "attributes.json",
        "annotations": "annotations.jsonl",
        "faces_annotations": "faces_annotations.jsonl",
        "pairs": "pairs.json",
        "ids": "ids.json",
        "vqa_gt": "vqa_gt.jsonl",
        "dba_gt": "dba_gt.jsonl",
        "captions_gt": "captions_gt.jsonl",
        "captions_pred": "captions_pred.jsonl",
    }
    _dump_json(
        {
            "attributes": [
                {"name": spec.attribute, "demographics": list(spec.demographics)}
            ]
        },
        out / "attributes.json",
    )
    _dump_jsonl(annotation_rows, out / "annotations.jsonl")
    _dump_jsonl(skew.annotation_rows, out / "faces_annotations.jsonl")
    _dump_json(
        {img: sorted(txts) for img, txts in retrieval.pairs.items()},
        out / "pairs.json",
    )
    _dump_json(sample_ids(spec), out / "ids.json")
    _dump_jsonl(vqa.gt_rows, out / "vqa_gt.jsonl")
    _dump_jsonl(dba_part.gt_rows, out / "dba_gt.jsonl")
    _dump_jsonl(captions.gt_rows, out / "captions_gt.jsonl")
    _dump_jsonl(captions.pred_rows, out / "captions_pred.jsonl")

    per_model: dict[str, dict[str, str]] = {}
    for m, model in enumerate(models):
        entry = {
            "pre_space": f"pre_{model}.emb",
            "post_space": f"post_{model}.emb",
            "texts": f"texts_{model}.emb",
            "faces": f"faces_{model}.emb",
            "prompt": f"prompt_{model}.emb",
            "vqa_pred": f"vqa_pred_{model}.jsonl",
            "dba_pred": f"dba_pred_{model}.jsonl",
        }
        write_embeddings(pre_spaces[m], out / entry["pre_space"])
        write_embeddings(post_spaces[m], out / entry["post_space"])
        write_embeddings(retrieval.texts[model], out / entry["texts"])
        write_embeddings(skew.faces[model], out / entry["faces"])
        write_embeddings(skew.prompts[model], out / entry["prompt"])
        _dump_jsonl(vqa.pred_rows[model], out / entry["vqa_pred"])
        _dump_jsonl(dba_part.pred_rows[model], out / entry["dba_pred"])
        per_model[model] = entry

    expected = {
        "seed": spec.seed,
        "attribute": spec.attribute,
        "demographics": list(spec.demographics),
        "models": models,
        "pre": {
            "recall_kl": {
                "k": spec.recall_k,
                "per_model": retrieval.expected_kl,
                "per_model_recall": retrieval.expected_recall,
                "tolerance": 1e-9,
            },
            "max_skew": {
                "k": skew.k,
                "per_model": skew.expected,
                "tolerance": 1e-9,
            },
        },
        "down": {
            "vqa_kl": {
                "accuracy_mode": "soft",
                "per_model": vqa.expected_kl,
                "per_model_accuracy": vqa.expected_accuracy,
                "tolerance": 1e-9,
            },
            "dba": {
                "top_n": 50,
                "per_model": dba_part.expected,
                "tolerance": 1e-9,
            },
        },
        "captions": {
            "leak_side": spec.leak_side,
            "leak_rate": spec.leak_rate,
            "expected_sign": captions.expected_sign,
        },
        "planted_correlation": {
            "pre_metric": "recall_kl",
            "down_metric": "vqa_kl",
            "attribute": spec.attribute,
            "rho": 1.0,
        },
        "max_offplant_abs_rho": 0.5 if spec.models >= 3 else None,
    }
    _dump_json(expected, out / "expected.json")

    manifest = {
        "spec": spec.to_dict(),
        "files": files,
        "per_model": per_model,
        "expected": "expected.json",
    }
    _dump_json(manifest, out / "manifest.json")
    _dump_json(spec.to_dict(), out / "spec.json")
    return manifest
