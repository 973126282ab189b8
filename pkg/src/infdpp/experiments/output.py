"""Serialization of experiment results: JSON (UTF-8, sorted keys) and CSV (RFC 4180)."""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any

from infdpp.experiments.schema import ExperimentResult, OutputFormat


def _clean(value: Any) -> Any:
    """Replace non-finite floats (not representable in JSON) with strings."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_clean(v) for v in value]
    return value


def to_json(result: ExperimentResult) -> str:
    payload = _clean(result.model_dump(mode="json"))
    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def to_csv(result: ExperimentResult) -> str:
    """Result rows as CSV; a run without rows emits its scalar results as one row."""
    rows = result.rows or [
        {k: v for k, v in result.results.items() if not isinstance(v, list | dict)}
    ]
    fieldnames: list[str] = []
    for row in rows:
        fieldnames.extend(k for k in row if k not in fieldnames)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _clean(v) for k, v in row.items()})
    return buffer.getvalue()


def render(result: ExperimentResult, fmt: OutputFormat) -> str:
    return to_csv(result) if fmt is OutputFormat.CSV else to_json(result)


def write(result: ExperimentResult, fmt: OutputFormat, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(render(result, fmt))
