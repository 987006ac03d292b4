"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line through the ``verdict`` fixture; the
lines are repeated in the "acceptance criteria" section of the pytest
summary.
"""
import json
import math
import time

import numpy as np
import pytest

import oracles
from cardiorad.cli import main
from cardiorad.features import FeatureTable
from cardiorad.firstorder import first_order_features
from cardiorad.preprocess import discretize
from cardiorad.selection import (ConfusionMatrix, loo_accuracy_reference, metrics_from_confusion,
                                 sfs_select)
from cardiorad.shape import shape_features
from cardiorad.svm import kkt_violations, train_binary
from cardiorad.texture import (glcm_features, glcm_from_grid, glrlm_features, glrlm_from_grid,
                               glszm_features, glszm_from_grid)

from conftest import line_region
from test_selection import CLASSES, REFERENCE_CM, noisy_table
from test_shape import LENGTHS, RATIOS, ball
from test_texture import GLCM_SLICE, ROW, ZONE_SLICE, random_grid


def test_criterion_1_texture_oracles(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches = []
    for k in range(200):
        grid, ng = random_grid(rng, max_dim=6, max_ng=4)
        m = glcm_from_grid(grid, ng)
        ref = oracles.glcm_counts(grid, ng)
        same = np.array_equal(m.counts, ref)
        if same and ref.sum():
            same = np.abs(m.entries - ref / ref.sum()).max() <= 1e-12
        r = glrlm_from_grid(grid, ng)
        same &= all(np.array_equal(r.counts[j], oracles.direction_runs(grid, d, ng, r.max_run_length))
                    for j, d in enumerate(r.directions))
        same &= np.array_equal(glszm_from_grid(grid, ng).counts, oracles.zone_counts(grid, ng))
        if not same:
            mismatches.append(k)
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 10.0
    assert verdict(1, ok, f"200 regions, {len(mismatches)} mismatches, {elapsed:.2f} s")


def test_criterion_2_worked_fixtures(verdict):
    glcm = glcm_features(glcm_from_grid(GLCM_SLICE, 3, offsets=[(1, 0, 0)]))
    sre = glrlm_features(glrlm_from_grid(ROW, 3, directions=[(1, 0, 0)]))["ShortRunEmphasis"]
    sae = glszm_features(glszm_from_grid(ZONE_SLICE, 3))["SmallAreaEmphasis"]
    checks = {
        "contrast": (glcm["Contrast"], 0.5),
        "max_probability": (glcm["MaximumProbability"], 1 / 3),
        "sre": (sre, (1 / 4 + 1 / 9 + 1) / 3),
        "sae": (sae, (1 / 9 + 1 / 25 + 1) / 3),
    }
    ok = all(abs(got - want) <= 1e-9 for got, want in checks.values())
    ok &= round(sre, 4) == 0.4537 and round(sae, 4) == 0.3837
    detail = ", ".join(f"{k}={got:.6f}" for k, (got, _) in checks.items())
    assert verdict(2, ok, detail)


def test_criterion_3_shape_convergence(verdict):
    mask = ball(10)
    f = shape_features(mask)
    target = 4 / 3 * math.pi * 10 ** 3
    volume_ok = abs(f.mesh_volume - target) <= 0.05 * target
    sphericity_ok = 0.95 <= f.sphericity <= 1.01
    identities_ok = (abs(f.compactness2 - f.sphericity ** 3) <= 1e-12
                     and abs(f.spherical_disproportion - 1 / f.sphericity) <= 1e-12)
    scaling_ok = True
    for k in (0.5, 2.0):
        g = shape_features(mask, (k, k, k))
        scaling_ok &= math.isclose(g.mesh_volume, f.mesh_volume * k ** 3, rel_tol=1e-9)
        scaling_ok &= math.isclose(g.voxel_volume, f.voxel_volume * k ** 3, rel_tol=1e-9)
        scaling_ok &= math.isclose(g.surface_area, f.surface_area * k ** 2, rel_tol=1e-9)
        scaling_ok &= all(math.isclose(getattr(g, n), getattr(f, n) * k, rel_tol=1e-9)
                          for n in LENGTHS)
        scaling_ok &= all(math.isclose(getattr(g, n), getattr(f, n), rel_tol=1e-9) for n in RATIOS)
    ok = volume_ok and sphericity_ok and identities_ok and scaling_ok
    detail = (f"volume {f.mesh_volume:.1f} (target {target:.2f}, ok={volume_ok}), "
              f"sphericity {f.sphericity:.4f} (ok={sphericity_ok}), "
              f"identities ok={identities_ok}, scaling ok={scaling_ok}")
    assert verdict(3, ok, detail)


def test_criterion_4_first_order(verdict):
    rng = np.random.default_rng(4)
    invariant = ("variance", "standard_deviation", "skewness", "kurtosis", "entropy", "uniformity",
                 "mean_absolute_deviation", "range")
    failures = 0
    for _ in range(100):
        n = int(rng.integers(2, 200))
        x = rng.normal(rng.uniform(-100, 100), rng.uniform(0.1, 50), n)
        bins = int(rng.integers(2, 65))
        base = first_order_features(discretize(line_region(x), bins))
        b, a = rng.uniform(-500, 500), rng.uniform(0.1, 10)
        shifted = first_order_features(discretize(line_region(x + b), bins))
        scaled = first_order_features(discretize(line_region(x * a), bins))
        good = all(math.isclose(getattr(shifted, k), getattr(base, k), rel_tol=1e-9, abs_tol=1e-9)
                   for k in invariant)
        good &= math.isclose(shifted.mean, base.mean + b, rel_tol=1e-9, abs_tol=1e-9)
        good &= all(math.isclose(getattr(scaled, k), getattr(base, k), rel_tol=1e-9, abs_tol=1e-9)
                    for k in ("skewness", "kurtosis", "entropy", "uniformity"))
        good &= math.isclose(scaled.standard_deviation, base.standard_deviation * a, rel_tol=1e-9)
        good &= base.entropy <= math.log2(bins) + 1e-12
        failures += not good
    f = first_order_features(discretize(line_region([1, 2, 3]), 32))
    fixture_ok = (f.mean == 2.0 and f.energy == 14.0 and f.variance == 2 / 3
                  and f.root_mean_squared == math.sqrt(14 / 3))
    assert verdict(4, failures == 0 and fixture_ok,
                   f"100 regions, {failures} property failures, [1,2,3] fixture ok={fixture_ok}")


def test_criterion_5_svm(verdict):
    worst_dir = worst_margin = worst_eq = 0.0
    kkt_bad = 0
    C = 1e3
    for seed in range(50):
        X, y = oracles.separable_2d(seed)
        w, _, _ = oracles.hard_margin(X, y)
        m = train_binary(X, y, C=C)
        worst_dir = max(worst_dir, np.abs(m.weight / np.linalg.norm(m.weight)
                                          - w / np.linalg.norm(w)).max())
        worst_margin = max(worst_margin, abs(1 / np.linalg.norm(m.weight) - 1 / np.linalg.norm(w)))
        worst_eq = max(worst_eq, abs(np.dot(m.alpha, y)))
        kkt_bad += kkt_violations(X @ X.T, y, m.alpha, m.bias, C, 1e-3)
    ok = worst_dir <= 1e-3 and worst_margin <= 1e-3 and kkt_bad == 0 and worst_eq <= 1e-6
    assert verdict(5, ok, f"direction {worst_dir:.2e}, margin {worst_margin:.2e}, "
                          f"KKT violations {kkt_bad}, |sum alpha y| {worst_eq:.1e}")


def test_criterion_6_reference_metrics(verdict):
    r = metrics_from_confusion(ConfusionMatrix(CLASSES, REFERENCE_CM))
    expected_precision = (1, 0.85, 0.9, 0.95, 1)
    expected_recall = (0.87, 1, 0.86, 1, 1)
    got_p = tuple(round(r.precision[c], 2) for c in CLASSES)
    got_r = tuple(round(r.recall[c], 2) for c in CLASSES)
    ok = got_p == expected_precision and got_r == expected_recall
    assert verdict(6, ok, f"precision {got_p} (expected {expected_precision}), "
                          f"recall {got_r} (expected {expected_recall})")


def test_criterion_7_sfs_sanity(verdict):
    first_ok = curve_ok = 0
    for seed in range(100):
        table, informative = noisy_table(seed)
        trace = sfs_select(table)
        first_ok += trace.features[0] == informative
        curve_ok += all(loo_accuracy_reference(table, trace.features[:k]) == acc
                        for k, acc in trace.curve())
    assert verdict(7, first_ok == 100 and curve_ok == 100,
                   f"informative first in {first_ok}/100, curve re-evaluated exactly in {curve_ok}/100")


# ---------------------------------------------------------------------------
# end-to-end phantom pipeline (criteria 8 and 9)

def _pipeline(root, threads):
    start = time.perf_counter()
    steps = [
        ["phantom", "--out", root / "data", "--per-class", 20, "--grid", 32, "--seed", 42],
        ["extract", "--manifest", root / "data" / "manifest.json", "--out", root / "table.csv",
         "--threads", threads],
        ["select", "--table", root / "table.csv", "--out", root / "trace.json",
         "--threads", threads, "--plot", root / "curve.svg"],
        ["evaluate", "--table", root / "table.csv", "--trace", root / "trace.json",
         "--out", root / "report.json", "--ablation", "--threads", threads],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return time.perf_counter() - start


@pytest.fixture(scope="module")
def pipelines(tmp_path_factory):
    runs = {}
    for threads in (1, 8):
        root = tmp_path_factory.mktemp(f"pipeline{threads}")
        runs[threads] = (root, _pipeline(root, threads))
    return runs


@pytest.mark.slow
def test_criterion_8_phantom_pipeline(verdict, pipelines):
    root, elapsed = pipelines[1]
    report = json.loads((root / "report.json").read_text())
    curve = [p["accuracy"] for p in report["accuracy_curve"]]
    k = len(report["features"])
    best = max(curve)
    rises = curve[k - 1] - curve[0] >= 0.1
    plateau = all(a >= best - 0.05 for a in curve[k - 1:])
    ok = (report["accuracy"] >= 0.95 and k <= 10 and rises and plateau
          and elapsed < 600 and report["n_subjects"] == 100)
    shape = " ".join(f"{a:.2f}" for a in curve)
    assert verdict(8, ok, f"LOO accuracy {report['accuracy']:.3f} with {k} features, "
                          f"curve [{shape}], {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_9_determinism(verdict, pipelines):
    (a, _), (b, _) = pipelines[1], pipelines[8]
    names = ("table.csv", "trace.json", "trace.csv", "report.json")
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in names}
    assert verdict(9, all(same.values()),
                   "threads 1 vs 8: " + ", ".join(f"{n} {'identical' if s else 'DIFFERENT'}"
                                                  for n, s in same.items()))
