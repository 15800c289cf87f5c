"""Small shared numeric and IO helpers."""

from __future__ import annotations

import hashlib
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def kl_vs_uniform(values: Sequence[float | None]) -> float | None:
    """KL divergence (nats) of the L1-normalized values against uniform.

    Returns None when any value is undefined or negative or the total mass is
    zero; 0 * ln(0) is taken as 0.
    """
    vals: list[float] = []
    for v in values:
        if v is None or not math.isfinite(v):
            return None
        if v < 0:
            return None
        vals.append(float(v))
    n = len(vals)
    # accumulate in sorted order so label permutations cannot perturb the
    # float result
    vals.sort()
    total = sum(vals)
    if total <= 0.0:
        return None
    out = 0.0
    for v in vals:
        p = v / total
        if p > 0.0:
            out += p * math.log(p * n)
    return out


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Unit-normalize rows in float64; zero-magnitude rows are left as zeros."""
    mat = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    return mat / safe[:, None]


def row_norms(matrix: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(matrix, dtype=np.float64), axis=1)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sorted_unique(items: Iterable[str]) -> list[str]:
    return sorted(set(items))
