"""Feature CSV files: header ``id,f0,...,f{d-1}``, one vector per row."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from covmatch.errors import DataError
from covmatch.selection import FeatureMatrix


def read_features(path) -> FeatureMatrix:
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: empty file") from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}:1: {exc}") from exc
        d = len(header) - 1
        if d < 1 or header[0].strip() != "id" or [h.strip() for h in header[1:]] != [f"f{j}" for j in range(d)]:
            raise DataError(f"{path}:1: header must be id,f0,...,f{{d-1}}")
        ids, rows, seen = [], [], set()
        try:
            for record in reader:
                line = reader.line_num
                if not record or (len(record) == 1 and not record[0].strip()):
                    continue
                if len(record) != d + 1:
                    raise DataError(f"{path}:{line}: expected {d + 1} fields, got {len(record)}")
                ident = record[0]
                if ident in seen:
                    raise DataError(f"{path}:{line}: duplicate id {ident!r}")
                try:
                    values = [float(v) for v in record[1:]]
                except ValueError:
                    raise DataError(f"{path}:{line}: non-numeric feature value") from None
                if not all(np.isfinite(values)):
                    raise DataError(f"{path}:{line}: non-finite feature value")
                seen.add(ident)
                ids.append(ident)
                rows.append(values)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}:{reader.line_num}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    return FeatureMatrix(ids, np.array(rows, dtype=float))


def write_features(path, features: FeatureMatrix) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        handle.write(format_features(features))


def format_features(features: FeatureMatrix) -> str:
    lines = ["id," + ",".join(f"f{j}" for j in range(features.dim))]
    for ident, row in zip(features.ids, features.data):
        lines.append(ident + "," + ",".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def read_vector(path) -> np.ndarray:
    """A single header-less CSV row of floats."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 1:
        raise DataError(f"{path}: expected exactly one row, found {len(lines)}")
    try:
        values = np.array([float(v) for v in lines[0].split(",")])
    except ValueError:
        raise DataError(f"{path}:1: non-numeric value") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}:1: non-finite value")
    return values
