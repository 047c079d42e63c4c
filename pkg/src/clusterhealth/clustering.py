"""Reference k-means and import of externally computed cluster labels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, Kind
from .metric import ClusterAssignment


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iters: int = 100
    n_restarts: int = 10
    seed: int = 0
    tolerance: float = 1e-6
    standardize: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ClusteringError("k must be >= 1")
        if self.max_iters < 1 or self.n_restarts < 1:
            raise ClusteringError("max_iters and n_restarts must be >= 1")
        if not self.tolerance > 0:
            raise ClusteringError("tolerance must be > 0")


@dataclass
class LloydRun:
    centers: np.ndarray
    labels: np.ndarray  # 0-based
    inertia: float
    history: list[float]
    n_iter: int


def derive_seed(seed: int, k: int) -> int:
    """Stable per-k seed; hashing keeps sweeps reproducible without correlated restarts."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(k)]).generate_state(1)[0])


def _sq_dist(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dist(X, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:  # fewer distinct points than k
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[i] = X[idx]
        closest = np.minimum(closest, _sq_dist(X, centers[i : i + 1])[:, 0])
    return centers


def _repair_empty(X, centers, labels, d2):
    """Move each empty cluster's center onto the point farthest from its own center."""
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    if counts.all():
        return centers, labels, d2, False
    own = d2[np.arange(len(labels)), labels]
    taken = set()
    for j in np.flatnonzero(counts == 0):
        order = np.argsort(-own, kind="stable")
        for idx in order:
            if idx not in taken and counts[labels[idx]] > 1:
                break
        else:
            continue
        taken.add(int(idx))
        counts[labels[idx]] -= 1
        counts[j] += 1
        centers[j] = X[idx]
        labels[idx] = j
        own[idx] = 0.0
    d2 = _sq_dist(X, centers)
    return centers, labels, d2, True


def lloyd(X: np.ndarray, centers: np.ndarray, max_iters: int, tolerance: float) -> LloydRun:
    centers = centers.copy()
    history = []
    labels = None
    it = 0
    for it in range(1, max_iters + 1):
        d2 = _sq_dist(X, centers)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(labels)), labels].sum()))
        centers, labels, d2, _ = _repair_empty(X, centers, labels, d2)
        new = np.array([X[labels == j].mean(axis=0) for j in range(centers.shape[0])])
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift <= tolerance:
            break
    d2 = _sq_dist(X, centers)
    final = np.argmin(d2, axis=1)
    centers, final, d2, _ = _repair_empty(X, centers, final, d2)
    inertia = float(d2[np.arange(len(final)), final].sum())
    history.append(inertia)
    return LloydRun(centers, final, inertia, history, it)


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters by first appearance so equal partitions get equal labels."""
    uniq, first = np.unique(labels, return_index=True)
    remap = np.zeros(int(labels.max()) + 1, dtype=np.int64)
    remap[uniq[np.argsort(first)]] = np.arange(1, uniq.size + 1)
    return remap[labels]


def feature_matrix(dataset: Dataset, variables: Sequence[str] | None = None, standardize: bool = True) -> np.ndarray:
    names = dataset.numeric_names() if variables is None else list(variables)
    if not names:
        raise ClusteringError("k-means needs at least one numeric variable")
    for name in names:
        var = dataset[name]
        if var.kind is not Kind.NUMERIC:
            raise ClusteringError(f"variable {name!r} is categorical; k-means takes numeric variables only")
        if var.n_missing:
            raise ClusteringError(f"variable {name!r} has {var.n_missing} missing values")
    X = dataset.to_matrix(names)
    if standardize:
        X = X - X.mean(axis=0)
        sd = X.std(axis=0)
        X = X / np.where(sd > 0, sd, 1.0)
    return X


def kmeans(dataset: Dataset, config: KMeansConfig, variables: Sequence[str] | None = None) -> ClusterAssignment:
    """Best-of-restarts Lloyd k-means with k-means++ seeding.

    Restart ``i`` draws from the ``i``-th child of ``SeedSequence(config.seed)``,
    so the winner (lowest inertia, then lowest restart index) does not depend
    on execution order.
    """
    if config.k > dataset.n_obs:
        raise ClusteringError(f"k={config.k} exceeds the {dataset.n_obs} observations")
    X = feature_matrix(dataset, variables, config.standardize)
    source = f"kmeans(k={config.k},seed={config.seed})"
    if config.k == 1:
        return ClusterAssignment(np.ones(dataset.n_obs, dtype=np.int64), 1, source)
    best = None
    for child in np.random.SeedSequence(config.seed).spawn(config.n_restarts):
        rng = np.random.default_rng(child)
        run = lloyd(X, kmeans_plusplus(X, config.k, rng), config.max_iters, config.tolerance)
        if best is None or run.inertia < best.inertia:
            best = run
    return ClusterAssignment(_canonical(best.labels), config.k, source)


def load_assignment(path: str | Path, dataset: Dataset | int, delimiter: str = ",") -> ClusterAssignment:
    """Read cluster labels from a CSV with a ``cluster`` column (row order) or
    ``row_id,cluster`` columns (0-based ids)."""
    n_obs = dataset if isinstance(dataset, int) else dataset.n_obs
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise ClusteringError(f"cannot read assignment file {path}: {exc}") from exc
    if not rows:
        raise ClusteringError(f"{path}: empty assignment file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if "cluster" not in header:
        raise ClusteringError(f"{path}: header must contain a 'cluster' column")
    c = header.index("cluster")
    r = header.index("row_id") if "row_id" in header else None
    if len(body) != n_obs:
        raise ClusteringError(f"{path}: {len(body)} labels for a dataset of {n_obs} rows (row-count mismatch)")

    labels: list = [None] * n_obs
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ClusteringError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
        label = row[c].strip()
        if not label:
            raise ClusteringError(f"{path}: line {line}: empty cluster label")
        if r is None:
            labels[line - 2] = label
            continue
        try:
            rid = int(row[r])
        except ValueError:
            raise ClusteringError(f"{path}: line {line}: row_id {row[r]!r} is not an integer") from None
        if not 0 <= rid < n_obs:
            raise ClusteringError(f"{path}: line {line}: row_id {rid} does not map to a dataset row")
        if labels[rid] is not None:
            raise ClusteringError(f"{path}: line {line}: row_id {rid} given twice")
        labels[rid] = label
    return ClusterAssignment.from_labels(labels, source=str(path))


def write_assignment(path: str | Path, assignment: ClusterAssignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "cluster"])
        for i, lab in enumerate(assignment.labels):
            writer.writerow([i, int(lab)])
