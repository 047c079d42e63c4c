"""Column-oriented tabular datasets: CSV loading, typing and row selection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_MISSING = ("", "NA", "?")


class DatasetError(ValueError):
    """Raised for unreadable, malformed or inconsistent tabular input."""


class Kind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


def _parse_real(token: str) -> float | None:
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class Variable:
    """A named column. Missing entries are stored as ``None``."""

    name: str
    kind: Kind
    values: tuple

    def __post_init__(self):
        if not self.name:
            raise DatasetError("variable names must be non-empty")
        for i, v in enumerate(self.values):
            if v is None:
                continue
            if self.kind is Kind.NUMERIC:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise DatasetError(f"variable {self.name!r}, row {i}: {v!r} is not a finite real")
            elif not isinstance(v, str) or v == "":
                raise DatasetError(f"variable {self.name!r}, row {i}: category tokens must be non-empty text")

    @property
    def missing(self) -> np.ndarray:
        return np.fromiter((v is None for v in self.values), dtype=bool, count=len(self.values))

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    def as_float(self) -> np.ndarray:
        """Numeric values as a float array with NaN marking missing entries."""
        if self.kind is not Kind.NUMERIC:
            raise DatasetError(f"variable {self.name!r} is categorical")
        return np.array([np.nan if v is None else float(v) for v in self.values], dtype=float)

    def take(self, rows: Sequence[int]) -> "Variable":
        return Variable(self.name, self.kind, tuple(self.values[i] for i in rows))


@dataclass(frozen=True)
class Dataset:
    name: str
    variables: tuple[Variable, ...]
    n_obs: int = field(init=False)

    def __post_init__(self):
        if not self.variables:
            raise DatasetError("a dataset needs at least one variable")
        object.__setattr__(self, "variables", tuple(self.variables))
        n = len(self.variables[0].values)
        if n < 1:
            raise DatasetError("a dataset needs at least one observation")
        seen = set()
        for var in self.variables:
            if var.name in seen:
                raise DatasetError(f"duplicate variable name {var.name!r}")
            seen.add(var.name)
            if len(var.values) != n:
                raise DatasetError(
                    f"variable {var.name!r} has {len(var.values)} values, expected {n}"
                )
        object.__setattr__(self, "n_obs", n)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def __getitem__(self, name: str) -> Variable:
        for var in self.variables:
            if var.name == name:
                return var
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def numeric_names(self) -> list[str]:
        return [v.name for v in self.variables if v.kind is Kind.NUMERIC]

    def select(self, names: Iterable[str]) -> "Dataset":
        names = list(names)
        unknown = [n for n in names if n not in self]
        if unknown:
            raise DatasetError(f"unknown variable(s): {', '.join(unknown)}")
        wanted = set(names)
        return Dataset(self.name, tuple(v for v in self.variables if v.name in wanted))

    def complete_rows(self, names: Iterable[str] | None = None) -> np.ndarray:
        """Indices of rows with no missing value in any of ``names`` (default: all)."""
        variables = self.variables if names is None else [self[n] for n in names]
        missing = np.zeros(self.n_obs, dtype=bool)
        for var in variables:
            missing |= var.missing
        return np.flatnonzero(~missing)

    def take(self, rows: Sequence[int]) -> "Dataset":
        rows = [int(r) for r in rows]
        return Dataset(self.name, tuple(v.take(rows) for v in self.variables))

    def to_matrix(self, names: Iterable[str] | None = None) -> np.ndarray:
        names = self.numeric_names() if names is None else list(names)
        return np.column_stack([self[n].as_float() for n in names])

    def to_csv(self, path: str | Path, delimiter: str = ",") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            writer.writerow(self.names)
            for i in range(self.n_obs):
                writer.writerow(["" if v.values[i] is None else _format_cell(v.values[i]) for v in self.variables])


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def drop_variables(dataset: Dataset, names: Iterable[str]) -> Dataset:
    """Return ``dataset`` without ``names``; remaining variables keep their order."""
    names = set(names)
    unknown = sorted(names - set(dataset.names))
    if unknown:
        raise DatasetError(f"cannot drop unknown variable(s): {', '.join(unknown)}")
    kept = tuple(v for v in dataset.variables if v.name not in names)
    if not kept:
        raise DatasetError("dropping every variable leaves an empty dataset")
    return Dataset(dataset.name, kept)


def load_dataset(
    path: str | Path,
    delimiter: str = ",",
    header: bool = True,
    type_overrides: Mapping[str, Kind | str] | None = None,
    missing_markers: Iterable[str] = DEFAULT_MISSING,
    name: str | None = None,
) -> Dataset:
    """Read a delimited UTF-8 file into a typed :class:`Dataset`.

    A column is numeric when every non-missing entry parses as a finite real,
    unless ``type_overrides`` says otherwise. Errors name the offending row
    (1-based file line) or column.
    """
    path = Path(path)
    missing_markers = set(missing_markers)
    overrides = {k: Kind(v) for k, v in (type_overrides or {}).items()}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc

    if header:
        if not rows:
            raise DatasetError(f"{path}: empty file, no header row")
        columns, body, first_line = rows[0], rows[1:], 2
    else:
        width = len(rows[0]) if rows else 0
        columns, body, first_line = [f"V{i + 1}" for i in range(width)], rows, 1

    for j, col in enumerate(columns):
        if not col:
            raise DatasetError(f"{path}: column {j + 1} has an empty name")
    dupes = sorted({c for c in columns if columns.count(c) > 1})
    if dupes:
        raise DatasetError(f"{path}: duplicate column name(s) {', '.join(dupes)}")
    unknown = sorted(set(overrides) - set(columns))
    if unknown:
        raise DatasetError(f"{path}: type override for unknown column(s) {', '.join(unknown)}")

    body = [r for r in body if r]  # tolerate blank lines
    if not body:
        raise DatasetError(f"{path}: no data rows")
    for i, row in enumerate(body):
        if len(row) != len(columns):
            raise DatasetError(
                f"{path}: line {i + first_line} has {len(row)} fields, expected {len(columns)}"
            )

    variables = []
    for j, col in enumerate(columns):
        raw = [row[j] for row in body]
        tokens = [None if t in missing_markers else t for t in raw]
        kind = overrides.get(col)
        if kind is None:
            numeric = all(_parse_real(t) is not None for t in tokens if t is not None)
            kind = Kind.NUMERIC if numeric else Kind.CATEGORICAL
        if kind is Kind.NUMERIC:
            values = []
            for i, t in enumerate(tokens):
                if t is None:
                    values.append(None)
                    continue
                v = _parse_real(t)
                if v is None:
                    raise DatasetError(
                        f"{path}: line {i + first_line}, column {col!r}: {t!r} is not a finite number"
                    )
                values.append(v)
        else:
            values = tokens
        variables.append(Variable(col, kind, tuple(values)))
    return Dataset(name or path.stem, tuple(variables))
