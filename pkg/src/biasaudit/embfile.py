"""Bit-exact binary embedding file format.

Layout: 8 magic bytes ``BIAUD1\\0\\0``, a little-endian uint32 header length,
a UTF-8 JSON header, then count x dim little-endian IEEE-754 float32 values
in row-major order. The writer is canonical (fixed key order, no whitespace),
so write(load(f)) reproduces f byte for byte for canonically written files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import EmbeddingSet

MAGIC = b"BIAUD1\x00\x00"
_HEADER_LEN = struct.Struct("<I")


class EmbeddingFormatError(ValueError):
    """Raised on malformed embedding files; ``code`` names the diagnostic."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def write_embeddings(embeddings: EmbeddingSet, path: str | Path) -> None:
    header = {
        "version": 1,
        "dtype": "f32le",
        "count": len(embeddings),
        "dim": embeddings.dim,
        "model_id": embeddings.model_id,
        "ids": list(embeddings.ids),
    }
    header_bytes = json.dumps(
        header, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    payload = np.ascontiguousarray(embeddings.matrix, dtype="<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER_LEN.pack(len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def read_embeddings(path: str | Path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_embeddings(blob, source=str(path))


def parse_embeddings(blob: bytes, source: str = "<bytes>") -> EmbeddingSet:
    if blob[:8] != MAGIC:
        raise EmbeddingFormatError(
            "magic-mismatch", f"{source}: bad magic bytes {blob[:8]!r}"
        )
    if len(blob) < 12:
        raise EmbeddingFormatError(
            "truncated-payload", f"{source}: file ends before the header length"
        )
    (header_len,) = _HEADER_LEN.unpack(blob[8:12])
    header_end = 12 + header_len
    if len(blob) < header_end:
        raise EmbeddingFormatError(
            "truncated-payload", f"{source}: file ends inside the header"
        )
    try:
        header = json.loads(blob[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbeddingFormatError(
            "bad-header", f"{source}: header is not valid JSON ({exc})"
        ) from exc
    if not isinstance(header, dict):
        raise EmbeddingFormatError("bad-header", f"{source}: header must be an object")
    if header.get("version") != 1:
        raise EmbeddingFormatError(
            "bad-header", f"{source}: unsupported version {header.get('version')!r}"
        )
    if header.get("dtype") != "f32le":
        raise EmbeddingFormatError(
            "bad-header", f"{source}: unsupported dtype {header.get('dtype')!r}"
        )
    count = header.get("count")
    dim = header.get("dim")
    model_id = header.get("model_id")
    ids = header.get("ids")
    if not isinstance(count, int) or count < 0:
        raise EmbeddingFormatError("bad-header", f"{source}: invalid count {count!r}")
    if not isinstance(dim, int) or dim < 1:
        raise EmbeddingFormatError("bad-header", f"{source}: invalid dim {dim!r}")
    if not isinstance(model_id, str):
        raise EmbeddingFormatError(
            "bad-header", f"{source}: model_id must be a string"
        )
    if not isinstance(ids, list) or any(not isinstance(i, str) for i in ids):
        raise EmbeddingFormatError(
            "bad-header", f"{source}: ids must be a list of strings"
        )
    if len(ids) != count:
        raise EmbeddingFormatError(
            "count-mismatch",
            f"{source}: header count {count} != number of ids {len(ids)}",
        )
    if len(set(ids)) != len(ids):
        raise EmbeddingFormatError(
            "duplicate-ids", f"{source}: ids contain duplicates"
        )
    expected = count * dim * 4
    payload = blob[header_end:]
    if len(payload) < expected:
        raise EmbeddingFormatError(
            "truncated-payload",
            f"{source}: payload holds {len(payload)} bytes, expected {expected}",
        )
    if len(payload) > expected:
        raise EmbeddingFormatError(
            "trailing-bytes",
            f"{source}: {len(payload) - expected} unexpected bytes after the payload",
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    if matrix.size and not np.all(np.isfinite(matrix)):
        raise EmbeddingFormatError(
            "non-finite-values", f"{source}: payload contains non-finite values"
        )
    return EmbeddingSet(model_id=model_id, ids=tuple(ids), matrix=matrix)
