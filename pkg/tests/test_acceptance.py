"""Exit criteria. Each test records a PASS/FAIL line shown in the terminal summary."""

import math
import time

import mpmath
import numpy as np

from clusterhealth.analysis import k_sweep, prepare, score_assignment, suggest_k, variable_impact
from clusterhealth.binning import BinStrategy, bin_variable
from clusterhealth.cli import main
from clusterhealth.clustering import KMeansConfig, kmeans
from clusterhealth.data import Dataset, Kind, Variable, drop_variables, load_dataset
from clusterhealth.metric import (
    ClusterAssignment,
    CrossTabMatrix,
    crosstab,
    dataset_score,
    segregated_count,
    variable_score,
)

import vehicle_tables as pt


def naive_oracle(counts):
    cells = sorted(int(c) for row in counts for c in row)
    n = len(cells)
    median = cells[n // 2] if n % 2 else (cells[n // 2 - 1] + cells[n // 2]) / 2
    return median, [[int(c) > median for c in row] for row in counts]


def test_1_golden_worked_matrices(criterion):
    circ = CrossTabMatrix.from_counts(pt.CIRCULARITY, pt.CIRCULARITY_LABELS)
    skew = CrossTabMatrix.from_counts(pt.SKEWNESS, pt.SKEWNESS_LABELS)
    a, b = segregated_count(circ), segregated_count(skew)
    timings = []
    for _ in range(50):
        t0 = time.perf_counter()
        segregated_count(circ)
        timings.append(time.perf_counter() - t0)
    ok = (
        a.median == 6.5 and a.n_segregated == 15
        and (a.mask.astype(int) == pt.CIRCULARITY_MASK).all()
        and b.median == 0 and b.n_segregated == 12
        and (b.mask.astype(int) == pt.SKEWNESS_MASK).all()
        and min(timings) < 1e-3
    )
    criterion(1, ok, f"medians {a.median}/{b.median}, ones {a.n_segregated}/{b.n_segregated}, "
                     f"masks match, {min(timings) * 1e6:.0f} us")
    assert ok


def test_2_worked_scores(criterion):
    mpmath.mp.dps = 50
    circ = variable_score(15, 6, 5, 846, "circularity")
    skew = variable_score(12, 5, 5, 846, "skewness")
    hp_c = mpmath.mpf(15) / 6 * mpmath.log(mpmath.mpf(846) / 30)
    hp_s = mpmath.mpf(12) / 5 * mpmath.log(mpmath.mpf(846) / 25)
    total = dataset_score([circ, skew]).total
    err_c = abs(circ.score - float(hp_c))
    err_s = abs(skew.score - float(hp_s))
    err_sum = abs(total - (circ.score + skew.score))
    ok = err_c < 1e-9 and err_s < 1e-9 and err_sum < 1e-12
    criterion(2, ok, f"S={circ.score:.12f} (err {err_c:.1e}), {skew.score:.12f} (err {err_s:.1e}), "
                     f"sum err {err_sum:.1e}")
    assert ok


def test_3_conservation(criterion):
    ds, assignment = pt.reconstruct()
    circ = crosstab(bin_variable(ds["circularity"], BinStrategy.fixed_width(5)), assignment)
    skew = crosstab(bin_variable(ds["skewness"], BinStrategy.fixed_width(50)), assignment)
    ok = (
        circ.total == skew.total == int(circ.counts.sum()) == int(skew.counts.sum()) == 846
        and (circ.counts == pt.CIRCULARITY).all() and (skew.counts == pt.SKEWNESS).all()
    )
    criterion(3, ok, f"rebuilt totals {circ.total} and {skew.total}")
    assert ok


def test_4_oracle_equivalence(criterion):
    rng = np.random.default_rng(20240601)
    agree = 0
    for _ in range(1000):
        l, k = rng.integers(1, 13, size=2)
        counts = rng.integers(0, 501, size=(l, k))
        if rng.random() < 0.3:  # sparse matrices exercise the zero-median branch
            counts[rng.random((l, k)) < 0.6] = 0
        seg = segregated_count(CrossTabMatrix.from_counts(counts))
        median, mask = naive_oracle(counts.tolist())
        agree += seg.median == median and seg.mask.tolist() == mask and seg.n_segregated == sum(map(sum, mask))
    ok = agree == 1000
    criterion(4, ok, f"{agree}/1000 random matrices agree with the naive oracle")
    assert ok


def _random_case(rng):
    n = int(rng.integers(20, 200))
    k = int(rng.integers(1, 8))
    variables = []
    for j in range(int(rng.integers(1, 5))):
        if rng.random() < 0.6:
            variables.append(Variable(f"n{j}", Kind.NUMERIC, tuple(map(float, rng.normal(size=n).round(2)))))
        else:
            levels = [f"t{i}" for i in range(int(rng.integers(1, 7)))]
            variables.append(Variable(f"c{j}", Kind.CATEGORICAL, tuple(rng.choice(levels, n))))
    labels = rng.integers(1, k + 1, n)
    return Dataset("r", tuple(variables)), ClusterAssignment(labels, k)


def test_5_invariance(criterion):
    rng = np.random.default_rng(7)
    failures = 0
    for _ in range(100):
        ds, assignment = _random_case(rng)
        frame = prepare(ds)
        base = score_assignment(frame, assignment)

        relabeled = score_assignment(frame, assignment.relabel(rng.permutation(assignment.k) + 1))

        # bucket reorder: permute every cross-tab's rows and rescore
        reordered = dataset_score([
            variable_score(segregated_count(CrossTabMatrix.from_counts(m.counts[rng.permutation(m.l)]))
                           .n_segregated, m.l, m.k, base.n_d, m.variable)
            for m in base.matrices
        ])
        # and through the data: rename category tokens so their sorted order changes
        renamed = Dataset("r", tuple(
            v if v.kind is Kind.NUMERIC else Variable(v.name, v.kind, tuple(_rename(v.values, rng)))
            for v in ds.variables
        ))
        renamed_total = score_assignment(prepare(renamed), assignment).total

        order = rng.permutation(ds.n_obs)
        permuted = score_assignment(prepare(ds.take(order)), assignment.take(order))

        totals = {base.total, relabeled.total, reordered.total, renamed_total, permuted.total}
        failures += len(totals) != 1
    ok = failures == 0
    criterion(5, ok, f"relabel/bucket-reorder/row-permutation totals bit-identical in {100 - failures}/100 cases")
    assert ok


def _rename(values, rng):
    levels = sorted(set(values))
    new = [f"z{i:02d}" for i in rng.permutation(len(levels))]
    lookup = dict(zip(levels, new))
    return [lookup[v] for v in values]


def test_6_explanation_monotone(criterion):
    in_k = [variable_score(0, 6, k, 846).explanation_factor for k in range(1, 51)]
    in_l = [variable_score(0, l, 6, 846).explanation_factor for l in range(1, 51)]
    ok = all(x > y for x, y in zip(in_k, in_k[1:])) and all(x > y for x, y in zip(in_l, in_l[1:]))
    criterion(6, ok, "explanation factor strictly decreasing in k (l=6) and in l (k=6), N_d=846")
    assert ok


def test_7_vehicle_sweep(criterion, vehicle_path):
    ds = drop_variables(load_dataset(vehicle_path), {"class"})
    assert ds.n_obs == 846 and len(ds.numeric_names()) == 18
    argmaxes, finite, slowest = [], True, 0.0
    for seed in range(5):
        t0 = time.perf_counter()
        curve = k_sweep(ds, (2, 10), KMeansConfig(1, n_restarts=10, seed=seed))
        slowest = max(slowest, time.perf_counter() - t0)
        finite &= all(math.isfinite(t) for t in curve.totals)
        argmaxes.append(suggest_k(curve).argmax_k)
    ok = finite and all(4 <= a <= 8 for a in argmaxes) and slowest < 30
    criterion(7, ok, f"argmax_k per seed {argmaxes} (need all in [4, 8]), finite={finite}, "
                     f"slowest sweep {slowest:.1f}s")
    assert ok


def noise_trial(seed):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0, 0], [6, 6, 0], [0, 6, 6]], float)
    informative = np.vstack([rng.normal(c, 1.0, (100, 3)) for c in centers])
    noise = rng.uniform(0, 1, (300, 3))
    data = np.hstack([informative, noise])
    names = ["inf1", "inf2", "inf3", "noise1", "noise2", "noise3"]
    ds = Dataset("blobs", tuple(
        Variable(n, Kind.NUMERIC, tuple(map(float, data[:, j]))) for j, n in enumerate(names)
    ))
    impact = variable_impact(ds, kmeans(ds, KMeansConfig(3, seed=seed)))
    score = {r.variable: r.score for r in impact.rows}
    # strict: a tie with an informative variable is not "ranked below" it
    return max(score[n] for n in names[3:]) < min(score[n] for n in names[:3])


def test_8_noise_detection(criterion):
    hits = sum(noise_trial(seed) for seed in range(50))
    ok = hits >= 45
    criterion(8, ok, f"noise ranked below every informative variable in {hits}/50 trials (need >= 45)")
    assert ok


def test_9_sweep_determinism(criterion, vehicle_path, tmp_path):
    args = ["sweep", "--data", str(vehicle_path), "--exclude", "class", "--k-min", "2", "--k-max", "10",
            "--seed", "0"]
    codes = [main([*args, "--out", str(tmp_path / run)]) for run in ("a", "b")]
    a = (tmp_path / "a" / "curve.csv").read_bytes()
    b = (tmp_path / "b" / "curve.csv").read_bytes()
    ok = codes == [0, 0] and a == b and a.count(b"\n") == 10
    criterion(9, ok, f"curve.csv reruns byte-identical ({len(a)} bytes, 9 k rows)")
    assert ok
