"""Command line interface: ``clusterhealth score|sweep|compare|impact|outliers``.

Exit codes: 0 success, 1 runtime error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import (
    compare_methods,
    impact_from_report,
    k_sweep,
    prepare,
    score_assignment,
    score_kmeans,
    suggest_k,
)
from .binning import BinningError, BinStrategy
from .clustering import KMeansConfig, load_assignment
from .data import Kind, load_dataset
from .metric import outlier_cells, sparse_mask_render

OUT_ENV = "CLUSTERHEALTH_OUT"


class ConfigError(ValueError):
    pass


def num(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    data: str
    exclude: list[str] = field(default_factory=list)
    categorical: list[str] = field(default_factory=list)
    bin_strategy: str | None = None
    bin_overrides: dict[str, str] = field(default_factory=dict)
    weights: dict[str, float] = field(default_factory=dict)
    assignments: list[tuple[str, str]] = field(default_factory=list)
    k: int | None = None
    k_min: int | None = None
    k_max: int | None = None
    seed: int = 0
    restarts: int = 10
    max_iters: int = 100
    standardize: bool = True
    delimiter: str = ","
    out: str = "."
    formats: tuple[str, ...] = ("json", "csv")

    def strategies(self):
        try:
            mapping = {name: BinStrategy.parse(s) for name, s in self.bin_overrides.items()}
            if self.bin_strategy:
                mapping["*"] = BinStrategy.parse(self.bin_strategy)
        except BinningError as exc:
            raise ConfigError(str(exc)) from exc
        return mapping or None

    def kmeans_config(self, k: int = 1) -> KMeansConfig:
        return KMeansConfig(
            k=k, n_restarts=self.restarts, max_iters=self.max_iters,
            seed=self.seed, standardize=self.standardize,
        )

    def describe(self) -> dict:
        return {
            "data": self.data,
            "exclude": sorted(self.exclude),
            "categorical": sorted(self.categorical),
            "bin_strategy": self.bin_strategy or BinStrategy().describe(),
            "bin_overrides": dict(sorted(self.bin_overrides.items())),
            "weights": dict(sorted(self.weights.items())),
            "assignments": [list(a) for a in self.assignments],
            "k": self.k, "k_min": self.k_min, "k_max": self.k_max,
            "kmeans": {"seed": self.seed, "n_restarts": self.restarts,
                       "max_iters": self.max_iters, "standardize": self.standardize},
        }


def _pairs(items, what: str) -> dict[str, str]:
    out = {}
    for item in items or ():
        for part in str(item).split(","):
            if not part.strip():
                continue
            key, sep, value = part.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{what} must look like name=value, got {part!r}")
            out[key.strip()] = value.strip()
    return out


def _split(items) -> list[str]:
    return [p.strip() for item in items or () for p in str(item).split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with any of the options below (flags win)")
    common.add_argument("--data", help="input CSV")
    common.add_argument("--delimiter")
    common.add_argument("--exclude", action="append", help="variables left out (repeatable or comma list)")
    common.add_argument("--categorical", action="append", help="force variables to categorical")
    common.add_argument("--bins", type=int, help="shorthand for --bin-strategy count:N")
    common.add_argument("--bin-strategy", action="append",
                        help="width:W | count[:N] | decile | categorical, optionally prefixed var=")
    common.add_argument("--weights", action="append", help="var=weight (repeatable or comma list)")
    common.add_argument("--assignment", action="append", help="name=path or path to a label CSV")
    common.add_argument("--k", type=int, help="cluster with built-in k-means at this k")
    common.add_argument("--k-min", type=int)
    common.add_argument("--k-max", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--no-standardize", action="store_true", default=None)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--format", action="append", help="json, csv (default both)")

    parser = argparse.ArgumentParser(prog="clusterhealth", description="Cross-tab cluster health metric")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("score", "score one clustering"),
        ("sweep", "score built-in k-means over a k range"),
        ("compare", "compare several clusterings on one scale"),
        ("impact", "rank variables by score"),
        ("outliers", "list sparse, non-empty cross-tab cells"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")

    def pick(flag, key=None, default=None):
        value = getattr(args, flag)
        if value is not None:
            return value
        return file_cfg.get(key or flag, default)

    data = pick("data")
    if not data:
        raise ConfigError("--data is required")
    strategies = list(args.bin_strategy or [])
    if args.bins is not None:
        strategies.append(f"count:{args.bins}")
    if not strategies:
        strategies = [file_cfg["bin_strategy"]] if "bin_strategy" in file_cfg else []
    global_strategy, overrides = None, dict(file_cfg.get("bin_overrides", {}))
    for s in strategies:
        if "=" in s:
            overrides.update(_pairs([s], "--bin-strategy"))
        else:
            global_strategy = s

    weights = dict(file_cfg.get("weights", {}))
    weights.update(_pairs(args.weights, "--weights"))
    try:
        weights = {k: float(v) for k, v in weights.items()}
    except ValueError as exc:
        raise ConfigError(f"bad weight: {exc}") from exc
    if any(w < 0 for w in weights.values()):
        raise ConfigError("weights must be >= 0")

    raw_assign = args.assignment if args.assignment else file_cfg.get("assignments", [])
    if isinstance(raw_assign, dict):
        raw_assign = [f"{k}={v}" for k, v in raw_assign.items()]
    assignments = []
    for item in raw_assign:
        name, sep, path = str(item).partition("=")
        if not sep:
            name, path = Path(item).stem, item
        assignments.append((name, path))

    fmt = _split(args.format) or file_cfg.get("format", ["json", "csv"])
    if isinstance(fmt, str):
        fmt = [fmt]
    bad = set(fmt) - {"json", "csv"}
    if bad:
        raise ConfigError(f"unknown format(s): {', '.join(sorted(bad))}")
    standardize = not args.no_standardize if args.no_standardize else file_cfg.get("standardize", True)

    try:
        return RunConfig(
            data=str(data),
            exclude=_split(args.exclude) or list(file_cfg.get("exclude", [])),
            categorical=_split(args.categorical) or list(file_cfg.get("categorical", [])),
            bin_strategy=global_strategy,
            bin_overrides=overrides,
            weights=weights,
            assignments=assignments,
            k=pick("k"),
            k_min=pick("k_min"),
            k_max=pick("k_max"),
            seed=int(pick("seed", default=0)),
            restarts=int(pick("restarts", default=10)),
            max_iters=int(pick("max_iters", default=100)),
            standardize=bool(standardize),
            delimiter=pick("delimiter", default=","),
            out=pick("out", default=os.environ.get(OUT_ENV, ".")),
            formats=tuple(dict.fromkeys(fmt)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad option value: {exc}") from exc


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _variable_json(vs, m, seg, binned) -> dict:
    out = {
        "variable": vs.variable, "l": vs.l, "k": vs.k, "weight": vs.weight,
        "median": seg.median, "n_segregated": vs.n_segregated,
        "segregation_factor": vs.segregation_factor,
        "explanation_factor": vs.explanation_factor,
        "score": vs.score, "flags": list(vs.flags),
        "buckets": list(m.labels),
        "matrix": m.counts.tolist(), "mask": sparse_mask_render(seg),
        "strategy": binned.strategy.describe(),
    }
    if binned.edges is not None:
        out["edges"] = list(binned.edges)
    return out


def report_json(report, frame, cfg: RunConfig, source: str) -> dict:
    return {
        "k": report.k, "total": report.total, "n_d": report.n_d,
        "excluded_rows": report.excluded_rows, "clustering": source,
        "binning_fingerprint": report.fingerprint,
        "config": cfg.describe(),
        "warnings": report.warnings,
        "variables": [
            _variable_json(vs, m, seg, b)
            for vs, m, seg, b in zip(report.per_variable, report.matrices, report.segregation, frame.binned)
        ],
    }


SCORE_HEADER = ["variable", "l", "k", "weight", "median", "n_segregated",
                "segregation_factor", "explanation_factor", "score"]


def report_rows(report):
    return [
        [vs.variable, vs.l, vs.k, num(vs.weight), num(seg.median), vs.n_segregated,
         num(vs.segregation_factor), num(vs.explanation_factor), num(vs.score)]
        for vs, seg in zip(report.per_variable, report.segregation)
    ]


class Runner:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        overrides = {name: Kind.CATEGORICAL for name in cfg.categorical}
        self.dataset = load_dataset(cfg.data, delimiter=cfg.delimiter, type_overrides=overrides)
        self.frame = prepare(self.dataset, cfg.strategies(), cfg.exclude)

    def write(self, name: str, text: str, fmt: str | None = None) -> None:
        if fmt is None or fmt in self.cfg.formats:
            atomic_write(self.out / name, text)

    def single_source(self):
        cfg = self.cfg
        if (cfg.k is not None) == bool(cfg.assignments) or len(cfg.assignments) > 1:
            raise ConfigError("give exactly one clustering source: --k or a single --assignment")
        if cfg.k is not None:
            assignment, report = score_kmeans(self.frame, cfg.kmeans_config(cfg.k), cfg.weights)
            return assignment.source, report
        name, path = cfg.assignments[0]
        assignment = load_assignment(path, self.dataset)
        return f"{name}={path}", score_assignment(self.frame, assignment, cfg.weights)

    def score(self):
        source, report = self.single_source()
        self.write("report.json", _json_text(report_json(report, self.frame, self.cfg, source)), "json")
        self.write("report.csv", _csv_text(SCORE_HEADER, report_rows(report)), "csv")
        print(f"S^k = {num(report.total)} (k={report.k}, n_d={report.n_d}, "
              f"excluded rows={report.excluded_rows})")
        return report

    def sweep(self):
        cfg = self.cfg
        if cfg.k_min is None or cfg.k_max is None:
            raise ConfigError("sweep needs --k-min and --k-max")
        if cfg.k_min > cfg.k_max:
            raise ConfigError("--k-min must not exceed --k-max")
        curve = k_sweep(
            self.dataset, (cfg.k_min, cfg.k_max), cfg.kmeans_config(), cfg.strategies(),
            exclude=cfg.exclude, weights=cfg.weights,
        )
        names = [vs.variable for vs in curve.points[0][1].per_variable]
        rows = [[k, num(r.total)] + [num(vs.weight * vs.score) for vs in r.per_variable]
                for k, r in curve.points]
        self.write("curve.csv", _csv_text(["k", "total"] + names, rows))
        suggestion = {"argmax_k": None, "knee_k": None, "warnings": []}
        try:
            s = suggest_k(curve)
            suggestion = {"argmax_k": s.argmax_k, "knee_k": s.knee_k, "warnings": list(s.warnings)}
        except ValueError as exc:
            suggestion["warnings"].append(str(exc))
            print(f"warning: {exc}", file=sys.stderr)
        suggestion.update(binning_fingerprint=curve.binning_fingerprint, config=cfg.describe())
        self.write("suggestion.json", _json_text(suggestion))
        self.write("curve.json", _json_text({
            "method": curve.method, "binning_fingerprint": curve.binning_fingerprint,
            "binning": self.frame.binning(), "config": cfg.describe(),
            "points": [{"k": k, "total": r.total, "variables": [
                {"variable": vs.variable, "score": vs.score, "n_segregated": vs.n_segregated,
                 "segregation_factor": vs.segregation_factor,
                 "explanation_factor": vs.explanation_factor} for vs in r.per_variable]}
                for k, r in curve.points],
        }), "json")
        for k, total in zip(curve.ks, curve.totals):
            print(f"k={k:>3}  S^k={num(total)}")
        if suggestion["argmax_k"] is not None:
            print(f"argmax_k={suggestion['argmax_k']} knee_k={suggestion['knee_k']} (heuristic)")
        return curve

    def compare(self):
        cfg = self.cfg
        sources = [(name, load_assignment(path, self.dataset)) for name, path in cfg.assignments]
        if cfg.k is not None:
            sources.append((f"kmeans@{cfg.k}", score_kmeans(self.frame, cfg.kmeans_config(cfg.k))[0]))
        if not sources:
            raise ConfigError("compare needs at least one --assignment or --k")
        report = compare_methods(self.dataset, sources, cfg.strategies(), exclude=cfg.exclude,
                                 weights=cfg.weights)
        rows = [[e.method, e.k, num(e.total), report.binning_fingerprint] for e in report.entries]
        self.write("compare.csv", _csv_text(["method", "k", "total", "binning_fingerprint"], rows))
        self.write("compare.json", _json_text({
            "binning_fingerprint": report.binning_fingerprint, "n_d": report.n_d,
            "binning": self.frame.binning(), "config": cfg.describe(),
            "entries": [{"method": e.method, "k": e.k, "total": e.total,
                         "variables": {vs.variable: vs.score for vs in e.per_variable}}
                        for e in report.entries],
        }), "json")
        for e in report.entries:
            print(f"{e.method:<24} k={e.k:<3} S^k={num(e.total)}")
        return report

    def impact(self):
        _, report = self.single_source()
        impact = impact_from_report(report)
        rows = [[r.variable, num(r.score), num(r.segregation_factor), num(r.explanation_factor)]
                for r in impact.rows]
        self.write("impact.csv", _csv_text(
            ["variable", "score", "segregation_factor", "explanation_factor"], rows))
        self.write("impact.json", _json_text({
            "binning_fingerprint": impact.binning_fingerprint, "total": impact.total,
            "config": self.cfg.describe(),
            "rows": [{"variable": r.variable, "score": r.score,
                      "segregation_factor": r.segregation_factor,
                      "explanation_factor": r.explanation_factor, "flags": list(r.flags)}
                     for r in impact.rows],
        }), "json")
        for r in impact.rows:
            print(f"{r.variable:<28} {r.score:10.5f}  seg={r.segregation_factor:.4f}"
                  f"  expl={r.explanation_factor:.4f}")
        return impact

    def outliers(self):
        _, report = self.single_source()
        cells = [c for m, seg in zip(report.matrices, report.segregation) for c in outlier_cells(m, seg)]
        rows = [[c.variable, c.bucket_label, c.cluster_id, c.count,
                 " ".join(str(i) for i in c.observation_ids)] for c in cells]
        self.write("outliers.csv", _csv_text(["variable", "bucket", "cluster", "count", "row_ids"], rows))
        self.write("outliers.json", _json_text({
            "binning_fingerprint": report.fingerprint, "config": self.cfg.describe(),
            "cells": [{"variable": c.variable, "bucket": c.bucket_label, "cluster": c.cluster_id,
                       "count": c.count, "row_ids": list(c.observation_ids)} for c in cells],
        }), "json")
        print(f"{len(cells)} outlier cells covering {sum(c.count for c in cells)} observations")
        return cells


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        cfg = resolve_config(args)
        runner = Runner(cfg)
        getattr(runner, args.command)()
    except ConfigError as exc:
        print(f"clusterhealth: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"clusterhealth: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
