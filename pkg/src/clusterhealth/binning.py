"""Discretisation of variables into ordered buckets for cross-tabulation.

Numeric intervals are half-open ``[lo,hi)`` except the last one, which is
closed so that the maximum value is always covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Kind, Variable

FIXED_WIDTH = "fixed_width"
FIXED_COUNT = "fixed_count"
DECILE = "decile"
CATEGORICAL = "categorical"
_KINDS = (FIXED_WIDTH, FIXED_COUNT, DECILE, CATEGORICAL)

DEFAULT_MAX_BINS = 100
DEFAULT_BIN_COUNT = 10


class BinningError(ValueError):
    pass


@dataclass(frozen=True)
class BinStrategy:
    """How one variable is bucketed.

    ``bins=None`` with ``kind="fixed_count"`` means ``min(10, distinct values)``,
    which is the default coarse bucketing.
    """

    kind: str = FIXED_COUNT
    width: float | None = None
    bins: int | None = None
    max_bins: int = DEFAULT_MAX_BINS

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise BinningError(f"unknown bin strategy {self.kind!r}")
        if self.max_bins < 1:
            raise BinningError("max_bins must be >= 1")
        if self.kind == FIXED_WIDTH:
            if self.width is None or not (self.width > 0 and math.isfinite(self.width)):
                raise BinningError("fixed_width needs a finite width > 0")
        if self.kind == FIXED_COUNT and self.bins is not None and self.bins < 1:
            raise BinningError("fixed_count needs bins >= 1")

    @classmethod
    def fixed_width(cls, width: float, max_bins: int = DEFAULT_MAX_BINS) -> "BinStrategy":
        return cls(FIXED_WIDTH, width=float(width), max_bins=max_bins)

    @classmethod
    def fixed_count(cls, bins: int | None = None, max_bins: int = DEFAULT_MAX_BINS) -> "BinStrategy":
        return cls(FIXED_COUNT, bins=bins, max_bins=max_bins)

    @classmethod
    def decile(cls, max_bins: int = DEFAULT_MAX_BINS) -> "BinStrategy":
        return cls(DECILE, max_bins=max_bins)

    @classmethod
    def categorical(cls) -> "BinStrategy":
        return cls(CATEGORICAL)

    @classmethod
    def parse(cls, text: str) -> "BinStrategy":
        """Parse ``"width:5"``, ``"count:8"``, ``"count"``, ``"decile"`` or ``"categorical"``."""
        head, _, arg = text.strip().partition(":")
        head = head.lower()
        try:
            if head in ("width", FIXED_WIDTH):
                return cls.fixed_width(float(arg))
            if head in ("count", FIXED_COUNT, "histogram"):
                return cls.fixed_count(int(arg) if arg else None)
            if head == DECILE and not arg:
                return cls.decile()
            if head in (CATEGORICAL, "levels") and not arg:
                return cls.categorical()
        except ValueError as exc:
            raise BinningError(f"bad bin strategy {text!r}: {exc}") from exc
        raise BinningError(f"bad bin strategy {text!r}")

    def describe(self) -> str:
        if self.kind == FIXED_WIDTH:
            return f"width:{self.width!r}"
        if self.kind == FIXED_COUNT:
            return "count" if self.bins is None else f"count:{self.bins}"
        return self.kind


DEFAULT_STRATEGY = BinStrategy()


@dataclass(frozen=True)
class BinnedVariable:
    """A variable reduced to ``l`` buckets.

    ``bin_index`` holds 1-based bucket ids; 0 marks an excluded (missing)
    observation. ``edges`` has ``l + 1`` entries for numeric variables and is
    ``None`` for categorical levels.
    """

    source_name: str
    labels: tuple[str, ...]
    bin_index: np.ndarray
    edges: tuple[float, ...] | None
    strategy: BinStrategy

    @property
    def l(self) -> int:
        return len(self.labels)

    @property
    def n_included(self) -> int:
        return int(np.count_nonzero(self.bin_index))

    def counts(self) -> np.ndarray:
        return np.bincount(self.bin_index, minlength=self.l + 1)[1:]

    def take(self, rows: Sequence[int]) -> "BinnedVariable":
        return BinnedVariable(
            self.source_name, self.labels, self.bin_index[np.asarray(rows, dtype=int)],
            self.edges, self.strategy,
        )

    def describe(self) -> dict:
        out = {"variable": self.source_name, "strategy": self.strategy.describe(),
               "l": self.l, "labels": list(self.labels)}
        if self.edges is not None:
            out["edges"] = list(self.edges)
        return out


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _interval_labels(edges: np.ndarray) -> tuple[str, ...]:
    n = len(edges) - 1
    labels = tuple(
        f"[{_fmt(edges[i])},{_fmt(edges[i + 1])}{']' if i == n - 1 else ')'}" for i in range(n)
    )
    if len(set(labels)) != n:
        labels = tuple(
            f"[{edges[i]!r},{edges[i + 1]!r}{']' if i == n - 1 else ')'}" for i in range(n)
        )
    return labels


def _as_values(values) -> np.ndarray:
    arr = np.array([np.nan if v is None else v for v in values], dtype=float)
    if np.isinf(arr).any():
        raise BinningError("numeric values must be finite (NaN/None marks missing)")
    return arr


def _edges(present: np.ndarray, strategy: BinStrategy) -> np.ndarray:
    lo, hi = float(present.min()), float(present.max())
    if strategy.kind == FIXED_WIDTH:
        w = strategy.width
        start = math.floor(lo / w) * w
        n = max(1, math.ceil((hi - start) / w))
        if n > strategy.max_bins:
            raise BinningError(
                f"width {w!r} over [{lo!r}, {hi!r}] needs {n} intervals, above max_bins={strategy.max_bins}"
            )
        edges = start + w * np.arange(n + 1)
        while edges[-1] < hi:  # float drift
            edges = np.append(edges, edges[-1] + w)
        if len(edges) - 1 > strategy.max_bins:
            raise BinningError(f"width {w!r} exceeds max_bins={strategy.max_bins}")
        return edges
    if strategy.kind == FIXED_COUNT:
        n = strategy.bins
        if n is None:
            n = min(DEFAULT_BIN_COUNT, len(np.unique(present)))
        if n > strategy.max_bins:
            raise BinningError(f"{n} bins requested, above max_bins={strategy.max_bins}")
        if lo == hi:
            return np.array([lo, hi])
        return np.linspace(lo, hi, n + 1)
    if strategy.kind == DECILE:
        edges = np.unique(np.quantile(present, np.linspace(0.0, 1.0, 11)))
        if len(edges) == 1:
            return np.array([lo, hi])
        return edges
    raise BinningError("categorical strategy cannot bin numeric values")


def bin_numeric(values, strategy: BinStrategy = DEFAULT_STRATEGY, name: str = "") -> BinnedVariable:
    """Bucket numeric ``values`` (``None``/NaN = missing) into ordered intervals."""
    arr = _as_values(values)
    present = arr[~np.isnan(arr)]
    if present.size == 0:
        raise BinningError(f"variable {name!r}: all values missing")
    edges = _edges(present, strategy)
    if strategy.kind == DECILE and len(edges) - 1 > strategy.max_bins:
        raise BinningError(f"decile binning exceeds max_bins={strategy.max_bins}")
    n = len(edges) - 1
    index = np.zeros(arr.shape, dtype=np.int64)
    ok = ~np.isnan(arr)
    index[ok] = np.clip(np.searchsorted(edges, arr[ok], side="right"), 1, n)
    return BinnedVariable(name, _interval_labels(edges), index, tuple(float(e) for e in edges), strategy)


def encode_categorical(values, name: str = "") -> BinnedVariable:
    """One bucket per distinct token, ordered lexicographically; ``None`` = missing."""
    levels = sorted({v for v in values if v is not None})
    if not levels:
        raise BinningError(f"variable {name!r}: all values missing")
    lookup = {tok: i + 1 for i, tok in enumerate(levels)}
    index = np.array([0 if v is None else lookup[v] for v in values], dtype=np.int64)
    return BinnedVariable(name, tuple(str(t) for t in levels), index, None, BinStrategy.categorical())


def bin_variable(variable: Variable, strategy: BinStrategy | None = None) -> BinnedVariable:
    if variable.kind is Kind.CATEGORICAL:
        if strategy is not None and strategy.kind != CATEGORICAL:
            raise BinningError(
                f"variable {variable.name!r} is categorical; strategy {strategy.describe()!r} does not apply"
            )
        return encode_categorical(variable.values, variable.name)
    return bin_numeric(variable.values, strategy or DEFAULT_STRATEGY, variable.name)
