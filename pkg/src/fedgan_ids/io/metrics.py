"""The metrics stream: one JSON record per line, floats with 17 significant digits."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable
from pathlib import Path
from types import TracebackType
from typing import IO, Any

from fedgan_ids.constants import METRICS_FLOAT_DIGITS
from fedgan_ids.models.records import (
    RecordModel,
    RoundRecord,
    SummaryRecord,
    metrics_line_adapter,
)


def _render_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"Cannot write non-finite value {value} to metrics.")
    text = format(value, f".{METRICS_FLOAT_DIGITS}g")
    return text if any(c in text for c in ".e") else f"{text}.0"


def render_json(value: Any) -> str:
    """Compact JSON with fixed-precision floats and keys in their original order."""
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return _render_float(value)
    if isinstance(value, (int, str)):
        return json.dumps(value)
    if isinstance(value, dict):
        return (
            "{"
            + ",".join(
                f"{json.dumps(str(k))}:{render_json(v)}" for k, v in value.items()
            )
            + "}"
        )
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(render_json(v) for v in value) + "]"
    raise TypeError(f"Cannot render {type(value).__name__} as JSON.")


def render_record(record: RecordModel) -> str:
    return render_json(record.model_dump(mode="json"))


class MetricsWriter:
    """Appends records to a stream, flushing after each one."""

    def __init__(self, stream: IO[str]) -> None:
        self.stream = stream
        self.count = 0

    @classmethod
    def open(cls, path: Path) -> MetricsWriter:
        return cls(path.open("a", encoding="utf-8"))

    def write(self, record: RoundRecord | SummaryRecord) -> None:
        self.stream.write(render_record(record) + "\n")
        self.stream.flush()
        self.count += 1

    def close(self) -> None:
        self.stream.close()

    def __enter__(self) -> MetricsWriter:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        traceback: TracebackType | None,
    ) -> None:
        self.close()


def write_metrics(
    stream: IO[str], records: Iterable[RoundRecord | SummaryRecord]
) -> int:
    writer = MetricsWriter(stream)
    for record in records:
        writer.write(record)
    return writer.count


def read_metrics(path: Path) -> list[RoundRecord | SummaryRecord]:
    with path.open(encoding="utf-8") as file:
        return [
            metrics_line_adapter.validate_json(line) for line in file if line.strip()
        ]
