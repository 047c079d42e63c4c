"""Optimum-k sweeps, cross-method comparison and per-variable impact.

All analyses bin the dataset once (:func:`prepare`) and reuse those buckets
for every k and every method, so totals share one scale.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .binning import BinnedVariable, BinStrategy, bin_variable
from .clustering import KMeansConfig, derive_seed, kmeans
from .data import Dataset, Kind
from .metric import (
    ClusterAssignment,
    ScoreReport,
    VariableScore,
    crosstab,
    dataset_score,
    score_matrix,
)

Strategies = Union[BinStrategy, Mapping[str, BinStrategy], None]


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class ScoringFrame:
    """Scored rows of a dataset together with their fixed binning."""

    dataset: Dataset
    row_ids: np.ndarray
    source_n_obs: int
    binned: tuple[BinnedVariable, ...]
    fingerprint: str

    @property
    def n_d(self) -> int:
        return self.dataset.n_obs

    @property
    def excluded_rows(self) -> int:
        return self.source_n_obs - self.n_d

    def binning(self) -> list[dict]:
        return [b.describe() for b in self.binned]

    def align(self, assignment: ClusterAssignment) -> ClusterAssignment:
        """Restrict a whole-dataset assignment to the scored rows."""
        if assignment.n_obs == self.source_n_obs:
            return assignment.take(self.row_ids) if self.excluded_rows else assignment
        if assignment.n_obs == self.n_d:
            return assignment
        raise AnalysisError(
            f"assignment has {assignment.n_obs} labels; dataset has {self.source_n_obs} rows"
            f" ({self.n_d} scored)"
        )


def _strategy_for(name: str, strategies: Strategies) -> BinStrategy | None:
    if strategies is None or isinstance(strategies, BinStrategy):
        return strategies
    return strategies.get(name, strategies.get("*"))


def prepare(
    dataset: Dataset,
    bin_strategies: Strategies = None,
    exclude: Iterable[str] = (),
) -> ScoringFrame:
    """Drop ``exclude``d variables and incomplete rows, then bin every variable.

    ``bin_strategies`` is one strategy for all numeric variables, or a mapping
    by variable name where the key ``"*"`` sets the fallback.
    """
    exclude = set(exclude)
    unknown = sorted(exclude - set(dataset.names))
    if unknown:
        raise AnalysisError(f"cannot exclude unknown variable(s): {', '.join(unknown)}")
    if isinstance(bin_strategies, Mapping):
        stray = sorted(set(bin_strategies) - set(dataset.names) - {"*"})
        if stray:
            raise AnalysisError(f"bin strategy given for unknown variable(s): {', '.join(stray)}")
    names = [n for n in dataset.names if n not in exclude]
    if not names:
        raise AnalysisError("no variables left to score")
    rows = dataset.complete_rows(names)
    if rows.size == 0:
        raise AnalysisError("every row has a missing value in the scored variables")
    scored = dataset.select(names).take(rows)
    binned = []
    for var in scored.variables:
        strategy = _strategy_for(var.name, bin_strategies)
        if var.kind is Kind.CATEGORICAL and strategy is not None and strategy.kind != "categorical":
            strategy = None  # a global numeric strategy does not apply to categories
        binned.append(bin_variable(var, strategy))
    payload = {
        "dataset": dataset.name,
        "n_obs": dataset.n_obs,
        "scored_rows": int(rows.size),
        "binning": [b.describe() for b in binned],
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]
    return ScoringFrame(scored, rows, dataset.n_obs, tuple(binned), digest)


def score_assignment(
    frame: ScoringFrame,
    assignment: ClusterAssignment,
    weights: Mapping[str, float] | None = None,
) -> ScoreReport:
    """Score one assignment on the frame's fixed binning."""
    assignment = frame.align(assignment)
    matrices, segs, scores = [], [], []
    for b in frame.binned:
        m = crosstab(b, assignment, frame.row_ids)
        seg, vs = score_matrix(m, frame.n_d)
        matrices.append(m)
        segs.append(seg)
        scores.append(vs)
    return dataset_score(
        scores, weights, k=assignment.k,
        n_d=frame.n_d, excluded_rows=frame.excluded_rows,
        matrices=tuple(matrices), segregation=tuple(segs), fingerprint=frame.fingerprint,
    )


def score_kmeans(
    frame: ScoringFrame,
    config: KMeansConfig,
    weights: Mapping[str, float] | None = None,
) -> tuple[ClusterAssignment, ScoreReport]:
    """Cluster the frame's numeric variables with k-means and score the result."""
    assignment = kmeans(frame.dataset, config)
    return assignment, score_assignment(frame, assignment, weights)


@dataclass(frozen=True)
class ScoreCurve:
    method: str
    points: tuple[tuple[int, ScoreReport], ...]
    binning_fingerprint: str

    @property
    def ks(self) -> list[int]:
        return [k for k, _ in self.points]

    @property
    def totals(self) -> list[float]:
        return [r.total for _, r in self.points]


def _k_values(k_range) -> list[int]:
    if isinstance(k_range, tuple) and len(k_range) == 2:
        lo, hi = k_range
        ks = list(range(int(lo), int(hi) + 1))
    else:
        ks = sorted({int(k) for k in k_range})
    if not ks:
        raise AnalysisError(f"empty k range {k_range!r}")
    return ks


def k_sweep(
    dataset: Dataset,
    k_range,
    kmeans_config: KMeansConfig | None = None,
    bin_strategies: Strategies = None,
    *,
    exclude: Iterable[str] = (),
    weights: Mapping[str, float] | None = None,
    n_jobs: int = 1,
) -> ScoreCurve:
    """Score built-in k-means over an inclusive ``(k_min, k_max)`` range.

    The seed for each k is ``derive_seed(config.seed, k)``.
    """
    frame = prepare(dataset, bin_strategies, exclude)
    ks = _k_values(k_range)
    if ks[0] < 1 or ks[-1] > frame.n_d:
        raise AnalysisError(f"k range {ks[0]}..{ks[-1]} outside 1..{frame.n_d}")
    base = kmeans_config or KMeansConfig(k=1)

    def one(k):
        cfg = replace(base, k=k, seed=derive_seed(base.seed, k))
        return k, score_kmeans(frame, cfg, weights)[1]

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            points = list(pool.map(one, ks))
    else:
        points = [one(k) for k in ks]
    return ScoreCurve("kmeans", tuple(points), frame.fingerprint)


@dataclass(frozen=True)
class ComparisonEntry:
    method: str
    k: int
    total: float
    per_variable: tuple[VariableScore, ...]


@dataclass(frozen=True)
class ComparisonReport:
    entries: tuple[ComparisonEntry, ...]
    binning_fingerprint: str
    n_d: int = 0


def compare_methods(
    dataset: Dataset,
    assignments: Mapping[str, ClusterAssignment] | Sequence[tuple[str, ClusterAssignment]],
    bin_strategies: Strategies = None,
    *,
    exclude: Iterable[str] = (),
    weights: Mapping[str, float] | None = None,
) -> ComparisonReport:
    pairs = list(assignments.items()) if isinstance(assignments, Mapping) else list(assignments)
    if not pairs:
        raise AnalysisError("nothing to compare")
    frame = prepare(dataset, bin_strategies, exclude)
    entries = []
    for name, assignment in pairs:
        report = score_assignment(frame, assignment, weights)
        if report.fingerprint != frame.fingerprint:
            raise AnalysisError(f"method {name!r} was scored on a different binning")
        entries.append(ComparisonEntry(name, report.k, report.total, report.per_variable))
    return ComparisonReport(tuple(entries), frame.fingerprint, frame.n_d)


@dataclass(frozen=True)
class ImpactRow:
    variable: str
    score: float
    segregation_factor: float
    explanation_factor: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ImpactReport:
    rows: tuple[ImpactRow, ...]
    total: float
    binning_fingerprint: str = ""

    def rank(self, variable: str) -> int:
        """0-based position, highest score first."""
        return [r.variable for r in self.rows].index(variable)


def impact_from_report(report: ScoreReport) -> ImpactReport:
    rows = [
        ImpactRow(v.variable, v.score, v.segregation_factor, v.explanation_factor, v.flags)
        for v in report.per_variable
    ]
    rows.sort(key=lambda r: -r.score)  # stable: ties keep dataset order
    return ImpactReport(tuple(rows), report.total, report.fingerprint)


def variable_impact(
    dataset: Dataset,
    assignment: ClusterAssignment,
    bin_strategies: Strategies = None,
    *,
    exclude: Iterable[str] = (),
) -> ImpactReport:
    """Per-variable score and both factors, best-explained variable first."""
    frame = prepare(dataset, bin_strategies, exclude)
    return impact_from_report(score_assignment(frame, assignment))


@dataclass(frozen=True)
class KSuggestion:
    argmax_k: int
    knee_k: int | None
    warnings: tuple[str, ...] = ()


def _knee(ks: np.ndarray, totals: np.ndarray) -> int:
    # Both axes rescaled to [0, 1] so the distance does not depend on units.
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    span = totals.max() - totals.min()
    y = (totals - totals.min()) / span if span > 0 else np.zeros_like(totals)
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    dist = np.abs(dy * (x - x[0]) - dx * (y - y[0])) / np.hypot(dx, dy)
    return int(ks[int(np.argmax(dist))])


def suggest_k(curve: ScoreCurve | Sequence[tuple[int, float]]) -> KSuggestion:
    """Heuristic optimum: the argmax of the total (smallest k on ties), plus the
    point farthest from the chord of the (k, total) polyline when the curve is
    not monotone."""
    if isinstance(curve, ScoreCurve):
        pairs = [(k, r.total) for k, r in curve.points]
    else:
        pairs = [(int(k), float(t)) for k, t in curve]
    if len(pairs) < 2:
        raise AnalysisError("suggest_k needs a curve with at least 2 points")
    pairs.sort()
    ks = np.array([k for k, _ in pairs], dtype=float)
    totals = np.array([t for _, t in pairs], dtype=float)
    argmax_k = int(ks[int(np.argmax(totals))])
    notes = []
    diffs = np.diff(totals)
    monotone = bool((diffs >= 0).all() or (diffs <= 0).all())
    if argmax_k in (int(ks[0]), int(ks[-1])):
        notes.append("no interior optimum")
    knee_k = None if monotone else _knee(ks, totals)
    notes.append("argmax_k is a heuristic suggestion, not a decision rule")
    return KSuggestion(argmax_k, knee_k, tuple(notes))
