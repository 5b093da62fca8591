"""Ingestion of external detector benchmark logs.

The expected file is CSV with columns ``test_id``, ``component``,
``ground_truth`` and ``predicted``, where the last two are 0/1 flags for
"component assembled" and "component reported assembled".  Rows are one
observation each; a benchmark of 15 scenes over 9 components yields 135
rows per detector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

REQUIRED_COLUMNS = ("test_id", "component", "ground_truth", "predicted")


class DetectionLogError(ValueError):
    """Malformed benchmark log file."""


@dataclass(frozen=True)
class LogRow:
    test_id: str
    component: int
    ground_truth: bool
    predicted: bool


def _parse_flag(value: str, column: str, line: int) -> bool:
    if value not in ("0", "1"):
        raise DetectionLogError(f"line {line}: {column} must be 0 or 1, got {value!r}")
    return value == "1"


def read_detection_log(path: str | Path) -> list[LogRow]:
    rows: list[LogRow] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DetectionLogError("log file is empty")
        missing = set(REQUIRED_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise DetectionLogError(f"log file is missing columns {sorted(missing)}")
        for line, record in enumerate(reader, start=2):
            try:
                component = int(record["component"])
            except (TypeError, ValueError):
                raise DetectionLogError(
                    f"line {line}: component must be an integer, got {record['component']!r}"
                ) from None
            rows.append(
                LogRow(
                    test_id=str(record["test_id"]),
                    component=component,
                    ground_truth=_parse_flag(record["ground_truth"], "ground_truth", line),
                    predicted=_parse_flag(record["predicted"], "predicted", line),
                )
            )
    if not rows:
        raise DetectionLogError("log file has a header but no rows")
    return rows


def write_detection_log(path: str | Path, rows: Iterable[LogRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REQUIRED_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.test_id, row.component, int(row.ground_truth), int(row.predicted)]
            )
