"""CSV reading and writing for datasets, partitions and masks.

Numbers are written with 17 significant digits so a save/load round trip
is exact.  Missing cells are written as the NA token.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..exceptions import ParseError
from ..mechanisms import Dataset

__all__ = ["load_csv", "save_csv", "save_labels", "load_labels", "save_matrix", "format_number"]


def format_number(x: float) -> str:
    return "%.17g" % x


def load_csv(path, na_token: str = "NA", label_column: str | None = None) -> Dataset:
    """Read a header row plus numeric rows.

    ``label_column`` names an integer column moved into ``ref_labels``.
    Errors report 1-based line and column numbers.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    width = len(header)
    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise ParseError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
    values = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != width:
            raise ParseError(f"{path}: line {line}: expected {width} fields, found {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == na_token:
                if j == label_idx:
                    raise ParseError(f"{path}: line {line}, column {j + 1}: missing label")
                values[i, j] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: line {line}, column {j + 1}: not a number: {cell!r}") from None
            if not np.isfinite(v):
                raise ParseError(f"{path}: line {line}, column {j + 1}: non-finite value {cell!r}")
            values[i, j] = v
    labels = None
    if label_idx is not None:
        raw = values[:, label_idx]
        if np.any(raw != np.round(raw)):
            raise ParseError(f"{path}: label column {label_column!r} must hold integers")
        _, labels = np.unique(raw.astype(np.int64), return_inverse=True)
        values = np.delete(values, label_idx, axis=1)
        header = header[:label_idx] + header[label_idx + 1:]
    return Dataset(values, ref_labels=labels, columns=header)


def save_csv(data: Dataset, path, na_token: str = "NA", label_column: str | None = None) -> None:
    """Write ``data``; ``label_column`` appends ``ref_labels`` under that name."""
    path = Path(path)
    header = list(data.columns)
    if label_column is not None:
        if data.ref_labels is None:
            raise ValueError("dataset has no reference labels")
        header.append(label_column)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [format_number(v) if ok else na_token for v, ok in zip(data.values[i], data.mask[i])]
            if label_column is not None:
                row.append(str(int(data.ref_labels[i])))
            w.writerow(row)


def save_matrix(values, path, columns=None) -> None:
    values = np.asarray(values, dtype=float)
    save_csv(Dataset(values, np.ones(values.shape, dtype=bool), columns=columns), path)


def save_labels(labels, path, name: str = "cluster") -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(name + "\n")
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(v)}\n")


def load_labels(path) -> np.ndarray:
    d = load_csv(path)
    if d.p != 1 or not d.is_complete:
        raise ParseError(f"{path}: a label file has one complete column")
    vals = d.values[:, 0]
    if np.any(vals != np.round(vals)) or np.any(vals < 0):
        raise ParseError(f"{path}: labels must be nonnegative integers")
    return vals.astype(np.int64)
