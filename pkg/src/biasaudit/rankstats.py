"""Spearman rank correlation, the combinatoric sweep, and gap analysis."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc

METHOD_T = "t-approx"
METHOD_PERMUTATION = "permutation"

# annotation thresholds for |rho| (reports only, never decisions)
STRENGTH_LEVELS = (
    (0.9, "very strong"),
    (0.7, "strong"),
    (0.5, "moderate"),
    (0.3, "fair"),
)
FAIR_THRESHOLD = 0.3


def correlation_strength(rho: float | None) -> str | None:
    if rho is None:
        return None
    magnitude = abs(rho)
    for cutoff, label in STRENGTH_LEVELS:
        if magnitude >= cutoff:
            return label
    return "poor"


@dataclass
class CorrelationResult:
    rho: float | None
    p: float | None
    n: int
    method: str
    detail: str | None = None  # "exact" | "montecarlo" for permutation p-values
    x_label: str = ""
    y_label: str = ""
    reason: str | None = None  # set when rho is undefined

    @property
    def strength(self) -> str | None:
        return correlation_strength(self.rho)


def tie_averaged_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties receiving the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    cx = x - x.mean()
    cy = y - y.mean()
    ssx = float(cx @ cx)
    ssy = float(cy @ cy)
    if ssx == 0.0 or ssy == 0.0:
        return None
    return float((cx @ cy) / math.sqrt(ssx * ssy))


def _t_approx_p(rho: float, n: int) -> float:
    # two-sided p of t = rho * sqrt(df / (1 - rho^2)); by the standard
    # identity this is I_{1-rho^2}(df/2, 1/2), evaluated on whichever tail of
    # the incomplete beta keeps the argument away from 1
    if abs(rho) >= 1.0:
        return 0.0
    df = n - 2
    rho_sq = rho * rho
    if rho_sq <= 0.5:
        return float(1.0 - betainc(0.5, df / 2.0, rho_sq))
    magnitude = abs(rho)
    return float(betainc(df / 2.0, 0.5, (1.0 - magnitude) * (1.0 + magnitude)))


def _permutation_rhos(rank_x: np.ndarray, perm_matrix: np.ndarray) -> np.ndarray:
    cx = rank_x - rank_x.mean()
    centered = perm_matrix - perm_matrix.mean(axis=1, keepdims=True)
    denom = math.sqrt(float(cx @ cx)) * np.sqrt((centered * centered).sum(axis=1))
    return (centered @ cx) / denom


def spearman(
    x: Sequence[float],
    y: Sequence[float],
    method: str = "auto",
    seed: int = 0,
    draws: int = 100_000,
    x_label: str = "",
    y_label: str = "",
) -> CorrelationResult:
    """Spearman rank correlation with a two-sided p-value.

    Ranks are tie-averaged and rho is the Pearson correlation of the ranks.
    The p-value uses exact permutation enumeration for n <= 8, the t
    approximation otherwise; ``method="montecarlo"`` draws seeded random
    permutations instead. Both inputs must be finite (drop undefined pairs
    before calling).
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be one-dimensional and equally long")
    n = len(xs)
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("inputs must be finite; drop undefined pairs first")
    if method not in ("auto", "t", "exact", "montecarlo"):
        raise ValueError(f"unknown method {method!r}")

    rank_x = tie_averaged_ranks(xs)
    rank_y = tie_averaged_ranks(ys)
    rho = _pearson(rank_x, rank_y)
    if rho is None:
        return CorrelationResult(
            rho=None,
            p=None,
            n=n,
            method=METHOD_T,
            x_label=x_label,
            y_label=y_label,
            reason="constant input vector",
        )

    if method == "auto":
        method = "exact" if n <= 8 else "t"
    if method == "t":
        return CorrelationResult(
            rho=rho, p=_t_approx_p(rho, n), n=n, method=METHOD_T,
            x_label=x_label, y_label=y_label,
        )
    if method == "exact":
        if n > 10:
            raise ValueError("exact permutation enumeration is limited to n <= 10")
        perms = np.array(list(itertools.permutations(range(n))))
        rhos = _permutation_rhos(rank_x, rank_y[perms])
        count = int(np.count_nonzero(np.abs(rhos) >= abs(rho) - 1e-12))
        return CorrelationResult(
            rho=rho, p=count / len(perms), n=n, method=METHOD_PERMUTATION,
            detail="exact", x_label=x_label, y_label=y_label,
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm_matrix = rng.permuted(np.tile(rank_y, (draws, 1)), axis=1)
    rhos = _permutation_rhos(rank_x, perm_matrix)
    count = int(np.count_nonzero(np.abs(rhos) >= abs(rho) - 1e-12))
    return CorrelationResult(
        rho=rho, p=count / draws, n=n, method=METHOD_PERMUTATION,
        detail="montecarlo", x_label=x_label, y_label=y_label,
    )


# ---------------------------------------------------------------------------
# combinatoric sweep
# ---------------------------------------------------------------------------

MetricTable = Mapping[str, Mapping[str, Mapping[str, float | None]]]
# model id -> metric name -> attribute name -> value (None = undefined)


@dataclass
class SweepSkip:
    pre_metric: str
    pre_attr: str
    down_metric: str
    down_attr: str
    reason: str


@dataclass
class SweepEntry:
    pre_metric: str
    pre_attr: str
    down_metric: str
    down_attr: str
    result: CorrelationResult


@dataclass
class SweepResult:
    results: list[SweepEntry] = field(default_factory=list)
    skipped: list[SweepSkip] = field(default_factory=list)


def _metric_attr_pairs(table: MetricTable) -> list[tuple[str, str]]:
    pairs = set()
    for metrics in table.values():
        for metric, by_attr in metrics.items():
            for attr in by_attr:
                pairs.add((metric, attr))
    return sorted(pairs)


def correlation_sweep(
    pre: MetricTable,
    down: MetricTable,
    cross_attributes: Sequence[tuple[str, str]] = (),
    min_models: int = 3,
    method: str = "auto",
    seed: int = 0,
) -> SweepResult:
    """Spearman correlation for every combination of pre-training metric,
    downstream metric, and protected attribute.

    Same-attribute combinations are always formed; cross-attribute pairs
    (e.g. pre-training ethnicity against downstream skintone) must be
    whitelisted explicitly. Models with an undefined value on either side are
    dropped pairwise per combination. Results are sorted by |rho| descending.
    """
    cross = set(cross_attributes)
    sweep = SweepResult()
    for pre_metric, pre_attr in _metric_attr_pairs(pre):
        for down_metric, down_attr in _metric_attr_pairs(down):
            if pre_attr != down_attr and (pre_attr, down_attr) not in cross:
                continue
            xs, ys = [], []
            for model in sorted(set(pre) & set(down)):
                xv = pre[model].get(pre_metric, {}).get(pre_attr)
                yv = down[model].get(down_metric, {}).get(down_attr)
                if xv is None or yv is None:
                    continue
                xs.append(xv)
                ys.append(yv)
            combo = (pre_metric, pre_attr, down_metric, down_attr)
            if len(xs) < min_models:
                sweep.skipped.append(
                    SweepSkip(*combo, reason=f"only {len(xs)} models with defined values")
                )
                continue
            result = spearman(
                xs,
                ys,
                method=method,
                seed=seed,
                x_label=f"{pre_metric}:{pre_attr}",
                y_label=f"{down_metric}:{down_attr}",
            )
            sweep.results.append(SweepEntry(*combo, result=result))
    sweep.results.sort(
        key=lambda e: (
            -(abs(e.result.rho) if e.result.rho is not None else -1.0),
            e.pre_metric,
            e.pre_attr,
            e.down_metric,
            e.down_attr,
        )
    )
    return sweep


# ---------------------------------------------------------------------------
# gap quadrants
# ---------------------------------------------------------------------------

QUADRANT_AXIS = "axis"


@dataclass
class GapPoint:
    model_id: str
    pre_gap: float
    down_gap: float
    quadrant: str  # I, II, III, IV, or "axis"


def _quadrant(pre_gap: float, down_gap: float) -> str:
    if pre_gap == 0.0 or down_gap == 0.0:
        return QUADRANT_AXIS
    if pre_gap > 0.0:
        return "I" if down_gap > 0.0 else "IV"
    return "II" if down_gap > 0.0 else "III"


def gap_quadrants(
    pre: Mapping[str, Mapping[str, float]],
    down: Mapping[str, Mapping[str, float]],
    attribute,
) -> tuple[list[GapPoint], dict]:
    """Per-model performance gaps between the attribute's two demographics.

    Gaps are first minus second demographic in the attribute's declared
    order. The summary reports the fraction of models in quadrants I+III
    (gaps agree in sign), II+IV (gaps oppose), and on an axis; the three
    fractions sum to 1.
    """
    if len(attribute.demographics) != 2:
        raise ValueError(
            f"gap analysis needs exactly two demographics, "
            f"{attribute.name!r} has {len(attribute.demographics)}"
        )
    first, second = attribute.demographics
    points: list[GapPoint] = []
    skipped = 0
    for model in sorted(set(pre) & set(down)):
        try:
            values = (
                pre[model][first], pre[model][second],
                down[model][first], down[model][second],
            )
        except KeyError:
            skipped += 1
            continue
        if any(v is None or not math.isfinite(v) for v in values):
            skipped += 1
            continue
        pre_gap = values[0] - values[1]
        down_gap = values[2] - values[3]
        points.append(
            GapPoint(model, pre_gap, down_gap, _quadrant(pre_gap, down_gap))
        )
    counts = {"I": 0, "II": 0, "III": 0, "IV": 0, QUADRANT_AXIS: 0}
    for pt in points:
        counts[pt.quadrant] += 1
    total = len(points)
    summary = {
        "models": total,
        "skipped": skipped,
        "counts": counts,
        "same_direction": (counts["I"] + counts["III"]) / total if total else None,
        "opposite_direction": (counts["II"] + counts["IV"]) / total if total else None,
        "on_axis": counts[QUADRANT_AXIS] / total if total else None,
    }
    return points, summary
