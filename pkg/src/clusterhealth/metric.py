"""Cross-tab cluster health metric.

For a binned variable with ``l`` buckets and a ``k``-cluster assignment over
``n_d`` observations, the l x k frequency matrix is thresholded at the median
of all its cells (zeros included). Cells strictly above the median are
*segregated*; their number ``n_seg`` gives

    score = n_seg / max(l, k) * ln(n_d / (l * k))

where the first factor is the segregation factor and the second the
explanation factor. A dataset score is the weighted sum of variable scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .binning import BinnedVariable


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-observation cluster ids in ``1..k``."""

    labels: np.ndarray
    k: int
    source: str = "unknown"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise MetricError("cluster labels must be a non-empty 1-D sequence")
        if self.k < 1:
            raise MetricError("k must be >= 1")
        if labels.min() < 1 or labels.max() > self.k:
            raise MetricError(f"cluster labels must lie in 1..{self.k}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, raw: Sequence, source: str = "unknown") -> "ClusterAssignment":
        """Compact arbitrary labels to ``1..k`` (sorted numerically when possible)."""
        raw = list(raw)
        distinct = set(raw)
        try:
            order = sorted(distinct, key=lambda t: (float(t), str(t)))
        except (TypeError, ValueError):
            order = sorted(distinct, key=str)
        lookup = {lab: i + 1 for i, lab in enumerate(order)}
        return cls(np.array([lookup[r] for r in raw], dtype=np.int64), len(order), source)

    @property
    def n_obs(self) -> int:
        return int(self.labels.size)

    def take(self, rows: Sequence[int]) -> "ClusterAssignment":
        return ClusterAssignment(self.labels[np.asarray(rows, dtype=int)], self.k, self.source)

    def relabel(self, permutation: Sequence[int]) -> "ClusterAssignment":
        """Rename cluster ``j`` to ``permutation[j - 1]``."""
        perm = np.asarray(permutation, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(1, self.k + 1)):
            raise MetricError("permutation must be a rearrangement of 1..k")
        return ClusterAssignment(perm[self.labels - 1], self.k, self.source)


@dataclass(frozen=True)
class CrossTabMatrix:
    """Bucket-by-cluster frequency table.

    ``bucket``/``cluster``/``row_ids`` describe the scored observations that
    filled the table; they are empty for tables built straight from counts.
    """

    variable: str
    labels: tuple[str, ...]
    counts: np.ndarray
    total: int
    bucket: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    cluster: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    row_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or 0 in counts.shape:
            raise MetricError("counts must be a non-empty 2-D matrix")
        if (counts < 0).any():
            raise MetricError("counts must be non-negative")
        if int(counts.sum()) != self.total:
            raise MetricError(f"cells sum to {int(counts.sum())}, total says {self.total}")
        if len(self.labels) != counts.shape[0]:
            raise MetricError("one label per row is required")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_counts(cls, counts, labels: Sequence[str] | None = None, variable: str = "") -> "CrossTabMatrix":
        counts = np.asarray(counts, dtype=np.int64)
        if labels is None:
            labels = [str(i + 1) for i in range(counts.shape[0])]
        return cls(variable, tuple(labels), counts, int(counts.sum()))

    @property
    def l(self) -> int:
        return int(self.counts.shape[0])

    @property
    def k(self) -> int:
        return int(self.counts.shape[1])


@dataclass(frozen=True)
class SegregationResult:
    median: float
    n_segregated: int
    mask: np.ndarray


@dataclass(frozen=True)
class VariableScore:
    variable: str
    segregation_factor: float
    explanation_factor: float
    score: float
    weight: float = 1.0
    l: int = 0
    k: int = 0
    n_segregated: int = 0
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class OutlierCell:
    variable: str
    bucket_label: str
    cluster_id: int
    count: int
    observation_ids: tuple[int, ...]


@dataclass(frozen=True)
class ScoreReport:
    k: int
    per_variable: tuple[VariableScore, ...]
    total: float
    n_d: int = 0
    excluded_rows: int = 0
    matrices: tuple[CrossTabMatrix, ...] = ()
    segregation: tuple[SegregationResult, ...] = ()
    fingerprint: str = ""

    def __getitem__(self, variable: str) -> VariableScore:
        for vs in self.per_variable:
            if vs.variable == variable:
                return vs
        raise KeyError(variable)

    @property
    def warnings(self) -> list[str]:
        return [f"{vs.variable}: {flag}" for vs in self.per_variable for flag in vs.flags]


def crosstab(
    binned: BinnedVariable,
    assignment: ClusterAssignment,
    row_ids: Sequence[int] | None = None,
) -> CrossTabMatrix:
    """Count observations per (bucket, cluster); excluded observations are skipped."""
    n = binned.bin_index.size
    if assignment.n_obs != n:
        raise MetricError(
            f"variable {binned.source_name!r} has {n} observations, assignment has {assignment.n_obs}"
        )
    ids = np.arange(n, dtype=np.int64) if row_ids is None else np.asarray(row_ids, dtype=np.int64)
    if ids.size != n:
        raise MetricError("row_ids length does not match the observations")
    keep = binned.bin_index > 0
    bucket = binned.bin_index[keep]
    cluster = assignment.labels[keep]
    counts = np.zeros((binned.l, assignment.k), dtype=np.int64)
    np.add.at(counts, (bucket - 1, cluster - 1), 1)
    return CrossTabMatrix(
        binned.source_name, binned.labels, counts, int(keep.sum()),
        bucket=bucket, cluster=cluster, row_ids=ids[keep],
    )


def segregated_count(m: CrossTabMatrix) -> SegregationResult:
    """Mark cells whose count is strictly above the median of all l*k cells."""
    median = float(np.median(m.counts))
    mask = m.counts > median
    mask.setflags(write=False)
    return SegregationResult(median, int(mask.sum()), mask)


def variable_score(
    n_segregated: int, l: int, k: int, n_d: int, variable: str = "", weight: float = 1.0
) -> VariableScore:
    if l < 1 or k < 1 or n_d < 1:
        raise MetricError(f"need l, k, n_d >= 1 (got l={l}, k={k}, n_d={n_d})")
    if not 0 <= n_segregated <= l * k:
        raise MetricError(f"n_segregated={n_segregated} outside 0..{l * k}")
    if weight < 0 or not math.isfinite(weight):
        raise MetricError("weights must be finite and >= 0")
    segregation = n_segregated / max(l, k)
    explanation = math.log(n_d / (l * k))
    flags = []
    if explanation <= 0:
        flags.append(f"non-positive explanation factor: l*k={l * k} >= n_d={n_d}")
    if l == 1:
        flags.append("degenerate: single bucket")
    return VariableScore(
        variable, segregation, explanation, segregation * explanation, float(weight),
        l, k, n_segregated, tuple(flags),
    )


def dataset_score(
    scores: Iterable[VariableScore],
    weights: Mapping[str, float] | None = None,
    k: int | None = None,
    **extra,
) -> ScoreReport:
    """Weighted sum of variable scores. Unlisted variables weigh 1."""
    scores = list(scores)
    weights = dict(weights or {})
    unknown = sorted(set(weights) - {s.variable for s in scores})
    if unknown:
        raise MetricError(f"weight given for unknown variable(s): {', '.join(unknown)}")
    for name, w in weights.items():
        if not (w >= 0 and math.isfinite(w)):
            raise MetricError(f"weight for {name!r} must be finite and >= 0, got {w!r}")
    weighted = [
        VariableScore(**{**s.__dict__, "weight": float(weights.get(s.variable, s.weight))})
        for s in scores
    ]
    total = math.fsum(s.weight * s.score for s in weighted)
    if k is None:
        k = weighted[0].k if weighted else 0
    return ScoreReport(k, tuple(weighted), total, **extra)


def outlier_cells(m: CrossTabMatrix, seg: SegregationResult) -> list[OutlierCell]:
    """Non-empty cells at or below the median, rarest first, then bucket order."""
    cells = []
    for i in range(m.l):
        for j in range(m.k):
            c = int(m.counts[i, j])
            if 0 < c <= seg.median:
                sel = (m.bucket == i + 1) & (m.cluster == j + 1)
                ids = tuple(int(r) for r in m.row_ids[sel])
                cells.append(OutlierCell(m.variable, m.labels[i], j + 1, c, ids))
    cells.sort(key=lambda c: (c.count, m.labels.index(c.bucket_label), c.cluster_id))
    return cells


def sparse_mask_render(seg: SegregationResult) -> list[list[int]]:
    return seg.mask.astype(int).tolist()


def format_table(m: CrossTabMatrix, table=None) -> str:
    """Plain-text rendering of counts (or of ``table``, e.g. a mask) with bucket labels."""
    table = m.counts if table is None else np.asarray(table)
    width = max(len(lab) for lab in m.labels)
    head = " " * width + " | " + " ".join(f"{j + 1:>5}" for j in range(m.k))
    lines = [head, "-" * len(head)]
    for lab, row in zip(m.labels, table):
        lines.append(f"{lab:>{width}} | " + " ".join(f"{int(v):>5}" for v in row))
    return "\n".join(lines)


def score_matrix(m: CrossTabMatrix, n_d: int | None = None, weight: float = 1.0):
    """Segregation and variable score for one cross-tab."""
    seg = segregated_count(m)
    vs = variable_score(seg.n_segregated, m.l, m.k, m.total if n_d is None else n_d, m.variable, weight)
    return seg, vs
