"""Canonical report emission: JSON with sorted keys and shortest round-trip
floats, plus a flattened CSV view. Re-running the same command on the same
inputs yields byte-identical reports except for the timing field; undefined
metrics appear as null with a reason, never as a NaN literal."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from pathlib import Path
from typing import Mapping

from ._common import sha256_file

TOOL_VERSION = "0.1.0"
TIMING_KEY = "timing"


def undefined(reason: str) -> dict:
    return {"value": None, "reason": reason}


def defined(value: float) -> dict:
    return {"value": value}


def metric_value(value: float | None, reason_if_none: str) -> dict:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return undefined(reason_if_none)
    return defined(float(value))


def _scrub(obj):
    """Reject NaN/inf floats early so canonical dumps never see them."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(
                "non-finite float in report; wrap undefined metrics with "
                "report.undefined(reason)"
            )
        return obj
    if isinstance(obj, dict):
        return {str(k): _scrub(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_scrub(v) for v in obj]
    return obj


def build_report(
    command: str,
    params: Mapping[str, object],
    input_paths: Mapping[str, str],
    results: Mapping[str, object],
    seed: int,
    started: float,
) -> dict:
    return {
        "tool_version": TOOL_VERSION,
        "command": command,
        "params": dict(sorted(params.items())),
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in sorted(input_paths.items())
            if path is not None
        },
        "seed": seed,
        "results": results,
        TIMING_KEY: {"seconds": time.perf_counter() - started},
    }


def canonical_json(report: Mapping[str, object]) -> str:
    return (
        json.dumps(
            _scrub(report),
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
            allow_nan=False,
        )
        + "\n"
    )


def _flatten(prefix: str, obj, rows: list[tuple[str, object]]) -> None:
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}.{key}" if prefix else str(key), obj[key], rows)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _flatten(f"{prefix}[{i}]", item, rows)
    else:
        rows.append((prefix, obj))


def flatten_csv(report: Mapping[str, object]) -> str:
    rows: list[tuple[str, object]] = []
    _flatten("", _scrub(report), rows)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, value in rows:
        writer.writerow([key, "" if value is None else value])
    return buffer.getvalue()


def emit_report(
    report: Mapping[str, object],
    path: str | Path | None,
    fmt: str = "json",
) -> str:
    """Serialize the report; write it when a path is given, return the text."""
    if fmt == "json":
        text = canonical_json(report)
    elif fmt == "csv":
        text = flatten_csv(report)
    else:
        raise ValueError(f"format must be json or csv, got {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
