"""The observation matrix and its CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidData


@dataclass(frozen=True)
class Dataset:
    """An ``n x p`` real matrix with column names."""

    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidData(f"expected a 2-d matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidData("data contains NaN or Inf")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = tuple(self.names) if self.names else tuple(f"X{k}" for k in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise InvalidData(f"{len(names)} names for {values.shape[1]} columns")
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def subsample(self, rows) -> "Dataset":
        return Dataset(self.values[np.asarray(rows)], self.names)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path) -> Dataset:
    """Read a comma-separated file; a non-numeric first row is a header."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidData(f"{path}: file is empty")
    names = ()
    if not all(_is_number(c) for c in rows[0]):
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
    if not rows:
        raise InvalidData(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise InvalidData(f"{path}: row {i + 1} has {len(r)} fields, expected {width}")
    try:
        values = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InvalidData(f"{path}: {exc}") from None
    try:
        return Dataset(values, names)
    except InvalidData as exc:
        raise InvalidData(f"{path}: {exc}") from None


def to_csv_text(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(data.names)
    for row in data.values:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(data))
