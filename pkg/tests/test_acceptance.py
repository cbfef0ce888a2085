"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
an "acceptance criteria" section of the terminal summary.
"""
import math
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy import stats as sst

from gossipsim.branching import ProcessParams, growth_constants, hitting_time_tauK, sample_W_r
from gossipsim.geometry import ManifoldSpec
from gossipsim.harness import ExperimentConfig
from gossipsim.harness.cli import main
from gossipsim.harness.experiments import (limit_law, run_coverage, run_distance, run_intersections,
                                           run_path_lln, run_rng)
from gossipsim.limitlaw import eval_h, gumbel_h_mc, phi, solve_h
from gossipsim import spatial

SEED = 20240601
# (label, r, m) for the three model presets
PRESETS = [("gossip d=1", 2, 1), ("gossip d=2", 3, 2), ("small-world d=2", 2, 1)]


@lru_cache(maxsize=None)
def w_samples(label: str, r: int) -> np.ndarray:
    idx = [p[0] for p in PRESETS].index(label)
    return sample_W_r(r, run_rng(SEED, 100 + idx), B=1e3, n=10_000)


@lru_cache(maxsize=None)
def path_lln(kind: str, d: int, Lambda: float, runs: int, probes: int = 0):
    cfg = ExperimentConfig(kind=kind, d=d, Lambda=Lambda, runs=runs, probes=probes, seed=SEED)
    t0 = time.time()
    report, _ = run_path_lln(cfg)
    return report, time.time() - t0


def test_1_logistic_anchor(acceptance):
    t0 = time.time()
    law = solve_h(0)
    s = law.grid
    err = float(np.max(np.abs(law.h_values - np.exp(s) / (1 + np.exp(s)))))
    ph = abs(phi(law, 1.0) - 0.5)
    dt = time.time() - t0
    ok = err <= 1e-6 and ph <= 1e-6 and dt < 5
    acceptance("1 logistic anchor", ok, f"sup err {err:.2e}, |phi(1)-1/2| {ph:.2e}, {dt:.1f}s")
    assert ok


def test_2_laplace_transform_vs_mc(acceptance):
    t0 = time.time()
    worst = 0.0
    ok = True
    for label, r, m in PRESETS:
        W = w_samples(label, r)
        law = limit_law(m)
        for th in (0.25, 1.0, 4.0):
            v = np.exp(-th * W)
            z = abs(v.mean() - phi(law, th)) / (v.std(ddof=1) / math.sqrt(len(v)))
            worst = max(worst, z)
            ok &= z <= 3
    dt = time.time() - t0
    ok &= dt < 180
    acceptance("2 phi vs Monte Carlo", ok, f"worst |diff|/SE {worst:.2f} (limit 3), {dt:.0f}s")
    assert ok


def test_3_mean_and_markov_tail(acceptance):
    ok = True
    parts = []
    for label, r, _ in PRESETS:
        W = w_samples(label, r)
        se = W.std(ddof=1) / math.sqrt(len(W))
        z = abs(W.mean() - 1) / se
        ok &= z <= 3
        for w in (2, 5, 10):
            p = np.mean(W >= w)
            ok &= p <= 1 / w + 3 * math.sqrt(p * (1 - p) / len(W))
        parts.append(f"{label} mean {W.mean():.4f} ({z:.1f} SE), P[W>=2] {np.mean(W >= 2):.3f}")
    acceptance("3 mean one and Markov tail", ok, "; ".join(parts))
    assert ok


def test_4_gumbel_representation(acceptance):
    gaps = {}
    for m in (1, 2):
        law = limit_law(m)
        e = gumbel_h_mc(m, 100_000, run_rng(SEED, 200 + m))
        gaps[m] = e.sup_distance(lambda x, law=law: eval_h(law, x))
    ok = max(gaps.values()) <= 0.02
    acceptance("4 Gumbel representation", ok,
               ", ".join(f"m={m} sup {g:.4f}" for m, g in gaps.items()) + " (limit 0.02)")
    assert ok


def test_5_thinning_time_change_ks(acceptance):
    p = ExperimentConfig(Lambda=1e3).params()
    T = (math.log(1e3) + 4) / p.lambda0
    incs = []
    idx = 0
    while sum(len(x) for x in incs) < 10_000:
        st = spatial.simulate(p, T, 0, run_rng(SEED, 300 + idx))
        incs.append(spatial.accepted_compensator_increments(st))
        idx += 1
    x = np.concatenate(incs)[:10_000]
    pval = float(sst.kstest(x, "expon").pvalue)
    ok = pval > 0.01
    acceptance("5 thinning exactness", ok, f"KS p {pval:.3f} on {len(x)} events from {idx} runs")
    assert ok


def test_6_path_lln_gossip_d1(acceptance):
    med = {}
    secs = 0.0
    for L in (1e3, 1e4, 1e5):
        rep, dt = path_lln("gossip", 1, L, 100)
        med[L] = rep["median_D"]
        secs += dt
    decreasing = med[1e3] > med[1e4] > med[1e5]
    ok = med[1e4] <= 0.05 and decreasing and secs < 600
    acceptance("6 path LLN gossip d=1", ok,
               "median D " + ", ".join(f"{L:.0e}: {v:.4f}" for L, v in med.items())
               + f" (limit 0.05 at 1e+04, strictly decreasing: {decreasing}), {secs:.0f}s")
    assert ok


def test_6b_variance_collapse(acceptance):
    rep, _ = path_lln("gossip", 1, 1e4, 100)
    f = rep["var_uncentered_x0"] / rep["var_centered_x0"]
    ok = f >= 3
    acceptance("6b variance collapse at x=0 (supplementary)", ok, f"factor {f:.2f} (limit 3)")
    assert ok


def test_7_path_lln_small_world_d2(acceptance):
    rep, dt = path_lln("small-world", 2, 1e4, 50, probes=10_000)
    ok = rep["median_D"] <= 0.07
    acceptance("7 path LLN small-world d=2", ok, f"median D {rep['median_D']:.4f} (limit 0.07), {dt:.0f}s")
    assert ok


def test_8_first_passage_law(acceptance):
    cfg = ExperimentConfig(Lambda=1e4, runs=400, probes=25, seed=SEED)
    rep, _ = run_distance(cfg)
    ok = rep["sup_gap"] <= 0.05
    acceptance("8 first-passage survival", ok,
               f"sup gap {rep['sup_gap']:.4f} over {rep['pooled_probes']} probes (limit 0.05)")
    assert ok


def test_9_intersections(acceptance):
    cfg = ExperimentConfig(Lambda=1e4, n_islands=20, placements=10_000, seed=SEED)
    rep, _ = run_intersections(cfg)
    ok = all(rep["checks"].values())
    acceptance("9 intersection statistics", ok,
               f"mean {rep['mean_N']:.4f} vs mu {rep['mu']:.4f} (SE {rep['se_N']:.4f}); "
               f"TV {rep['tv_poisson']:.4f} <= {rep['tv_bound']:.4f} + 3*{rep['tv_se']:.4f}")
    assert ok


def test_10_hitting_time_bound(acceptance):
    ok = True
    parts = []
    for label, d in (("gossip d=1", 1), ("gossip d=2", 2)):
        p = ProcessParams.from_lambda0("gossip", 1.0, ManifoldSpec.cube(d, 1e4))
        c_c = growth_constants(p.r, 2.0)["c_c"]
        for K in (2, 8):
            rng = run_rng(SEED, 400 + 10 * d + K)
            tau = np.array([hitting_time_tauK(p, K, rng) for _ in range(10_000)])
            for R in (3, 5):
                q = np.mean(tau >= c_c * R / p.lambda0)
                bound = 2 * K * math.exp(-R) + 3 * math.sqrt(q * (1 - q) / len(tau))
                ok &= q <= bound
                parts.append(f"{label} K={K} R={R}: {q:.4f}<={bound:.3f}")
    acceptance("10 hitting-time tail", ok, "; ".join(parts))
    assert ok


def test_11_coverage_time(acceptance):
    cfg = ExperimentConfig(Lambda=1e4, runs=200, seed=SEED)
    rep, _ = run_coverage(cfg)
    ok = rep["fraction_within_budget"] >= 0.95
    acceptance("11 coverage time", ok,
               f"{rep['fraction_within_budget']:.3f} of runs within budget {rep['budget']:.2f}; "
               f"excess quantiles {', '.join(f'{q:.2f}' for q in rep['excess_quantiles'])}")
    assert ok


def test_12_determinism(acceptance, tmp_path):
    cases = [["path-lln", "--Lambda", "1e3", "--runs", "3"],
             ["distance", "--Lambda", "1e3", "--runs", "3", "--probes", "50"],
             ["coverage", "--Lambda", "1e3", "--runs", "3"],
             ["intersections", "--Lambda", "1e4"],
             ["simulate", "--Lambda", "1e3", "--probes", "20"]]
    same = True
    for args in cases:
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / args[0] / rep
            main(args + ["--seed", "7", "--out", str(d)])
            outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
        same &= outs[0] == outs[1] and len(outs[0]) > 0
    acceptance("12 determinism", same, f"{len(cases)} subcommands re-run with the same seed, byte-identical: {same}")
    assert same
