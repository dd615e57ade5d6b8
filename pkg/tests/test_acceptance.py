"""Acceptance suite: one PASS/FAIL line per criterion, at the agreed tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the lines are collected and
printed in the terminal summary. Criteria 5 and 7 train every model on the
full synthetic corpus twice (a few minutes on one core).
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from primalsense import cli
from primalsense.corpus import CorpusError, Expression, Sense, parse_lines
from primalsense.evalkit import gold_ranks, mean_average_precision, mean_rank, precision_at_1
from primalsense.fusion import (
    HYBRID_MODELS,
    approximation_residual,
    entropy,
    lambda_from_R,
    maxent_distribution,
    rank_transform,
    solve_exact_lambda,
)
from primalsense.gradcheck import grad_check
from primalsense.scorers import SenseScores, cosine_scores

import gradcases
from oracles import brute_gold_rank, brute_metrics, matches_exactly, random_feasible_distribution

ACCEPTANCE_SEED = 0
RESULTS: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")


def test_1_fusion_worked_example():
    out = rank_transform(np.array([0.4, 0.1, 0.2, 0.3]), lambda_from_R(2.0))
    expected = np.array([0.533, 0.067, 0.133, 0.267])
    err = float(np.abs(out - expected).max())
    ok = err < 1e-3
    record(1, ok, f"worked example {np.round(out, 4).tolist()} max error {err:.1e} (tol 1e-3)")
    assert ok


def test_2_maxent_equivalence():
    rng = np.random.default_rng(2)
    worst_norm = worst_mean = 0.0
    worst_margin = tie_margin = math.inf
    pairs = [(n, R) for n in range(2, 11) for R in (1.1, 1.5, 2.0, 3.0) if 1 < R <= (n + 1) / 2]
    for n, R in pairs:
        p = maxent_distribution(n, solve_exact_lambda(n, R))
        worst_norm = max(worst_norm, abs(p.sum() - 1.0))
        worst_mean = max(worst_mean, abs(np.arange(1, n + 1) @ p - R))
        h = entropy(p)
        margin = min(h - entropy(random_feasible_distribution(n, R, rng)) for _ in range(1000))
        if n == 2:
            tie_margin = min(tie_margin, margin)
        else:
            worst_margin = min(worst_margin, margin)
    # with two ranks the mean fixes the distribution, so every sample is the optimum itself
    ok = worst_norm < 1e-8 and worst_mean < 1e-8 and worst_margin > 0 and abs(tie_margin) < 1e-8
    record(2, ok, f"{len(pairs)} pairs, |sum p - 1| <= {worst_norm:.1e}, |E[rank] - R| <= {worst_mean:.1e}, "
                  f"min entropy margin over 1000 samples/pair {worst_margin:.2e} for n >= 3 "
                  f"(n = 2 has a single feasible point: margin {tie_margin:.1e})")
    assert ok


def test_3_lambda_approximation():
    worst, where = 0.0, None
    for n in range(7, 21):
        for R in np.linspace(1.5, 3.0, 13):
            if R > (n + 1) / 2:
                continue
            gap = abs(solve_exact_lambda(n, R) - lambda_from_R(R))
            if gap > worst:
                worst, where = gap, (n, float(R))
    residual = approximation_residual(7, 1.2)
    gap_ok = worst < 0.02
    residual_ok = abs(residual - 1.1e-3) < 5e-5
    ok = gap_ok and residual_ok
    record(3, ok, f"max |lambda_exact - ln(R/(R-1))| = {worst:.4f} at n={where[0]}, R={where[1]:.3f} "
                  f"(tol 0.02, {'met' if gap_ok else 'NOT met'}); residual(7, 1.2) = {residual:.4e} "
                  f"(target 1.1e-3, {'met' if residual_ok else 'NOT met'})")
    assert ok


def test_4_gradient_integrity():
    parts, ok = [], True
    for name, build in gradcases.CASES.items():
        f, params = build()
        rep = grad_check(f, params, tol=1e-4)
        ok &= rep.passed
        parts.append(f"{name} {rep.max_rel_error:.1e}")
    record(4, ok, "max relative error: " + ", ".join(parts) + " (tol 1e-4)")
    assert ok


# -- criteria 5 and 7 share two full pipeline runs ------------------------------------

def _run_pipeline(out):
    start = time.perf_counter()
    assert cli.main(["synth", "--seed", str(ACCEPTANCE_SEED), "--out", str(out)]) == 0
    assert cli.main(["run", "--seed", str(ACCEPTANCE_SEED), "--out", str(out),
                     "--corpus", str(out / "corpus.jsonl")]) == 0
    return time.perf_counter() - start


@pytest.fixture(scope="module")
def full_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    first = _run_pipeline(base / "first")
    second = _run_pipeline(base / "second")
    return base / "first", base / "second", first, second


def _report(run, model):
    return json.loads((run / "reports" / f"{model}.test.json").read_text())


def test_5_synthetic_learnability(full_runs):
    run, _, seconds, _ = full_runs
    test = [json.loads(line) for line in (run / "corpus.jsonl").read_text().splitlines()]
    m = [len(r["senses"]) for r in test if r["split"] == "test"]
    baseline = 1.0 / float(np.mean(m))
    p1 = {model: _report(run, model)["p_at_1"] for model in ("umfs", "skipthought", "pattern", "relgraph", "hybrid")}
    best_part = max(p1[k] for k in HYBRID_MODELS)
    checks = {
        "pattern >= 0.9": p1["pattern"] >= 0.9,
        "relgraph >= 0.8": p1["relgraph"] >= 0.8,
        "hybrid >= max - 0.02": p1["hybrid"] >= best_part - 0.02,
        f"all > random {baseline:.3f}": all(v > baseline for v in p1.values()),
        "runtime <= 10 min": seconds <= 600,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record(5, ok, "test P@1 " + ", ".join(f"{k} {v:.3f}" for k, v in p1.items())
           + f"; run {seconds:.0f}s" + (f"; failed: {failed}" if failed else ""))
    assert ok


def test_7_determinism(full_runs):
    a, b, _, _ = full_runs
    files = sorted(p.relative_to(a) for p in (a / "reports").rglob("*") if p.is_file())
    files += [p.relative_to(a) for p in sorted((a / "scores").glob("*"))] + [a.joinpath("fusion.json").relative_to(a)]
    differing = [str(rel) for rel in files if (a / rel).read_bytes() != (b / rel).read_bytes()]
    ok = bool(files) and not differing
    record(7, ok, f"{len(files)} report/score files compared across two runs, {len(differing)} differ")
    assert ok


def test_6_metric_oracles():
    rng = np.random.default_rng(6)
    mismatches, map_below = 0, 0
    for _ in range(100):
        n = int(rng.integers(1, 40))
        raw = [np.round(rng.normal(size=int(rng.integers(2, 9))), 1) for _ in range(n)]
        golds = [int(rng.integers(0, len(r))) for r in raw]
        scores = [SenseScores(str(k), "m", tuple(r)) for k, r in enumerate(raw)]
        p1, map_, mr = precision_at_1(scores, golds), mean_average_precision(scores, golds), mean_rank(scores, golds)
        b_p1, b_map, b_mr = brute_metrics(raw, golds)
        ranks_equal = gold_ranks(scores, golds).tolist() == [brute_gold_rank(r, g) for r, g in zip(raw, golds)]
        exact = ranks_equal and p1 == float(b_p1) and mr == float(b_mr) and matches_exactly(map_, b_map)
        mismatches += not exact
        map_below += map_ < p1
    ok = mismatches == 0 and map_below == 0
    record(6, ok, f"100 trials, {mismatches} mismatches against an exact rational recount "
                  f"(MAP compared to within float summation roundoff), MAP < P@1 in {map_below}")
    assert ok


def test_8_degenerate_handling():
    one_hot = rank_transform(np.array([0.2, 0.9, 0.1]), lambda_from_R(1.0))
    one_hot_ok = one_hot.tolist() == [0.0, 1.0, 0.0]

    single = '{"id": "x", "surface": "s", "senses": [{"id": "a", "description": "d", "listed_position": 1}]}'
    corpus = parse_lines([single])
    try:
        Expression("x", "s", (Sense("a", "d", 1),))
        direct_rejected = False
    except CorpusError:
        direct_rejected = True
    single_ok = len(corpus) == 0 and corpus.n_dropped == 1 and direct_rejected

    with np.errstate(all="raise"):
        scores, flagged = cosine_scores(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([1.0, 0.0]))
        zero_key, _ = cosine_scores(np.array([[1.0, 0.0]]), np.zeros(2))
    cos_ok = scores[0] == 0.0 and flagged == [0] and zero_key[0] == 0.0 and np.isfinite(scores).all()

    ok = one_hot_ok and single_ok and cos_ok
    record(8, ok, f"R=1 one-hot {one_hot_ok}, m=1 rejected {single_ok}, zero-norm cosine finite and 0 {cos_ok}")
    assert ok
