"""External feature datasets.

A dataset is a UTF-8 CSV file with a header row. Every column but the last holds one numeric
feature; the last holds the label, `genuine` or `malicious`. Values are written with `repr`,
so writing and reading back reproduces every float exactly.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from fedgan_ids.constants import DEFAULT_LABEL_COLUMN
from fedgan_ids.errors import DatasetFormatError
from fedgan_ids.gan.model import Batch, Label


def _parse_row(
    fields: list[str], dim: int, line_number: int
) -> tuple[list[float], Label]:
    if len(fields) != dim + 1:
        raise DatasetFormatError(
            f"Expected {dim + 1} fields, found {len(fields)}.",
            line_number=line_number,
        )
    values = []
    for field in fields[:dim]:
        try:
            value = float(field)
        except ValueError:
            raise DatasetFormatError(
                f"{field!r} is not a number.", line_number=line_number
            ) from None
        if not math.isfinite(value):
            raise DatasetFormatError(
                f"{field!r} is not finite.", line_number=line_number
            )
        values.append(value)
    try:
        label = Label(fields[dim].strip())
    except ValueError:
        raise DatasetFormatError(
            f"Unknown label {fields[dim]!r}; expected "
            f"{Label.GENUINE.value!r} or {Label.MALICIOUS.value!r}.",
            line_number=line_number,
        ) from None
    return values, label


def _decode(path: Path) -> str:
    data = path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetFormatError(
            f"{path} is not UTF-8 text: {e.reason}.",
            line_number=data.count(b"\n", 0, e.start) + 1,
        ) from None


def load_feature_csv(path: Path, expected_dim: int | None = None) -> Batch:
    with io.StringIO(_decode(path), newline="") as file:
        reader = csv.reader(file)
        header = next(reader, None)
        if header is None:
            raise DatasetFormatError(f"{path} is empty.", line_number=1)
        dim = len(header) - 1
        if dim < 1:
            raise DatasetFormatError(
                "The header needs at least one feature column and a label column.",
                line_number=1,
            )
        if expected_dim is not None and dim != expected_dim:
            raise DatasetFormatError(
                f"Rows have {dim} features, expected {expected_dim}.", line_number=1
            )
        rows: list[list[float]] = []
        labels: list[Label] = []
        for fields in reader:
            values, label = _parse_row(fields, dim, reader.line_num)
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DatasetFormatError(f"{path} has a header but no rows.", line_number=2)
    return Batch(np.array(rows, dtype=np.float64), tuple(labels))


def write_feature_csv(
    path: Path,
    batch: Batch,
    feature_names: list[str] | None = None,
    label_column: str = DEFAULT_LABEL_COLUMN,
) -> None:
    names = feature_names or [f"f{i}" for i in range(batch.dim)]
    if len(names) != batch.dim:
        raise DatasetFormatError(
            f"{len(names)} feature names given for {batch.dim} features."
        )
    labels = batch.labels or (Label.GENUINE,) * len(batch)
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow([*names, label_column])
        for sample, label in zip(batch.samples, labels):
            writer.writerow([*(repr(float(v)) for v in sample), label.value])
