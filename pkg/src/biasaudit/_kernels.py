"""Numeric inner loops, available as numba-jitted or pure-numpy implementations.

The backend is picked once at import time from the ``BIASAUDIT_BACKEND``
environment variable (``numba`` or ``numpy``; default is numba when
importable, numpy otherwise). ``set_backend`` switches at runtime, which the
benchmark harness and the backend-equivalence tests rely on. Both paths are
deterministic; they may differ in the last float bits because accumulation
order differs.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_ENV_VAR = "BIASAUDIT_BACKEND"
_CHOICES = ("numba", "numpy")

_jitted: dict = {}


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _resolve_backend() -> str:
    requested = os.environ.get(_ENV_VAR, "").strip().lower() or "numba"
    if requested not in _CHOICES:
        warnings.warn(f"unknown {_ENV_VAR}={requested!r}; using numpy kernels")
        return "numpy"
    if requested == "numba" and not _numba_available():
        warnings.warn("numba is not importable; using numpy kernels")
        return "numpy"
    return requested


_backend = _resolve_backend()


def active_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _CHOICES:
        raise ValueError(f"backend must be one of {_CHOICES}, got {name!r}")
    if name == "numba" and not _numba_available():
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


def _jit(fn):
    # compile lazily so the numpy backend never pays numba import cost
    if fn.__name__ not in _jitted:
        from numba import njit

        _jitted[fn.__name__] = njit(cache=True)(fn)
    return _jitted[fn.__name__]


# ---------------------------------------------------------------------------
# kernel bodies (nopython-compatible loops; the numpy twins are vectorized)
# ---------------------------------------------------------------------------


def _pairwise_dot_upper_loop(rows):
    n = rows.shape[0]
    gram = np.dot(rows, rows.T)  # BLAS under numba too
    out = np.empty(n * (n - 1) // 2, dtype=np.float64)
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = gram[i, j]
            if s > 1.0:
                s = 1.0
            elif s < -1.0:
                s = -1.0
            out[m] = s
            m += 1
    return out


def _pairwise_dot_upper_np(rows):
    gram = rows @ rows.T
    iu, ju = np.triu_indices(rows.shape[0], k=1)
    return np.clip(gram[iu, ju], -1.0, 1.0)


def _nearest_centroid_loop(points, centroids):
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = np.inf
        best_j = 0
        for j in range(k):
            s = 0.0
            for d in range(dim):
                diff = points[i, d] - centroids[j, d]
                s += diff * diff
            if s < best:
                best = s
                best_j = j
        labels[i] = best_j
        dists[i] = best
    return labels, dists


def _nearest_centroid_np(points, centroids):
    sq = (
        (points * points).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * (points @ centroids.T)
    )
    np.maximum(sq, 0.0, out=sq)
    labels = np.argmin(sq, axis=1).astype(np.int64)
    dists = sq[np.arange(points.shape[0]), labels]
    return labels, dists


def _retrieval_hits_loop(queries, candidates, correct_flat, correct_offsets, k):
    n_q = queries.shape[0]
    n_c = candidates.shape[0]
    sims_all = np.dot(queries, candidates.T)
    hits = np.zeros(n_q, dtype=np.bool_)
    for i in range(n_q):
        for ci in range(correct_offsets[i], correct_offsets[i + 1]):
            c = correct_flat[ci]
            sc = sims_all[i, c]
            # rank of c under (similarity desc, candidate index asc)
            rank = 0
            for t in range(n_c):
                s = sims_all[i, t]
                if s > sc or (s == sc and t < c):
                    rank += 1
            if rank < k:
                hits[i] = True
                break
    return hits


def _retrieval_hits_np(queries, candidates, correct_flat, correct_offsets, k):
    sims = queries @ candidates.T
    n_q = queries.shape[0]
    hits = np.zeros(n_q, dtype=np.bool_)
    for i in range(n_q):
        row = sims[i]
        for c in correct_flat[correct_offsets[i] : correct_offsets[i + 1]]:
            sc = row[c]
            rank = int(np.count_nonzero(row > sc)) + int(
                np.count_nonzero(row[:c] == sc)
            )
            if rank < k:
                hits[i] = True
                break
    return hits


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------


def pairwise_dot_upper(rows: np.ndarray) -> np.ndarray:
    """Dot products of all row pairs (i < j, row-major order), clipped to [-1, 1].

    Rows are expected to be unit-normalized, so the result is the cosine
    similarity of every unordered pair.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if _backend == "numba":
        return _jit(_pairwise_dot_upper_loop)(rows)
    return _pairwise_dot_upper_np(rows)


def nearest_centroid(points: np.ndarray, centroids: np.ndarray):
    """Assign each point to its nearest centroid (squared L2, first index wins ties)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    if _backend == "numba":
        return _jit(_nearest_centroid_loop)(points, centroids)
    return _nearest_centroid_np(points, centroids)


def retrieval_hits(
    queries: np.ndarray,
    candidates: np.ndarray,
    correct_flat: np.ndarray,
    correct_offsets: np.ndarray,
    k: int,
) -> np.ndarray:
    """Per-query flag: does any correct candidate rank in the top k by dot product?

    Candidate ties are broken by ascending candidate index; callers sort
    candidates by id beforehand so that index order is id order.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    candidates = np.ascontiguousarray(candidates, dtype=np.float64)
    correct_flat = np.ascontiguousarray(correct_flat, dtype=np.int64)
    correct_offsets = np.ascontiguousarray(correct_offsets, dtype=np.int64)
    if _backend == "numba":
        return _jit(_retrieval_hits_loop)(
            queries, candidates, correct_flat, correct_offsets, k
        )
    return _retrieval_hits_np(queries, candidates, correct_flat, correct_offsets, k)
