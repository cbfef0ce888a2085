"""The headline experiments: path LLN, first passage, coverage, intersections."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate

from .. import spatial
from ..branching import _scaled_moments, sample_W_r
from ..geometry import covering_constant, distance, sample_uniform
from ..limitlaw import eval_h, solve_h
from . import stats
from .config import ExperimentConfig


def run_rng(seed: int, idx: int) -> np.random.Generator:
    """Independent stream for run ``idx`` of an ensemble with master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))


@lru_cache(maxsize=None)
def limit_law(m: int):
    return solve_h(m)


def ensemble(fn, cfg: ExperimentConfig, n: int, *args) -> list:
    """Evaluate fn(cfg, idx, *args) for idx < n; results come back in index order."""
    if cfg.workers <= 1:
        return [fn(cfg, i, *args) for i in range(n)]
    with ProcessPoolExecutor(cfg.workers) as pool:
        return list(pool.map(fn, [cfg] * n, range(n), *[[a] * n for a in args]))


@dataclass
class RunResult:
    run: int
    U_hat: float = math.nan
    D: float = math.nan
    fractions: list = field(default_factory=list)
    coverage_time: float = math.nan
    taus: list = field(default_factory=list)


def U_hat_from_births(births, lambda0: float, s: float, r: int) -> float:
    """log of the martingale W_tilde at time s, from the birth times up to s."""
    u = lambda0 * s
    H = _scaled_moments(np.asarray(births) * lambda0, u, r)
    return math.log(math.exp(-u) * float(np.sum(H[:r])))


def fractions_at(state, times, d: int) -> np.ndarray:
    if d == 1:
        return np.array([spatial.covered_fraction(state, t, "exact_d1")[0] for t in times])
    taus = state.probe_times()
    return np.array([np.mean(taus <= t) for t in times])


def _path_run(cfg: ExperimentConfig, idx: int) -> RunResult:
    p = cfg.params()
    xs = cfg.x_grid()
    times = cfg.time_at(xs)
    st = spatial.simulate(p, float(times[-1]), cfg.probes, run_rng(cfg.seed, idx), record=False)
    U = U_hat_from_births(st.births, p.lambda0, cfg.s_Lambda(), p.r)
    fr = fractions_at(st, times, p.d)
    pred = eval_h(limit_law(cfg.m), xs + math.log(cfg.offset_constant()) + U)
    return RunResult(idx, U, float(np.max(np.abs(fr - pred))), fr.tolist())


def run_path_lln(cfg: ExperimentConfig):
    """Covered-fraction trajectories against the randomly shifted limit profile."""
    res = ensemble(_path_run, cfg, cfg.runs)
    xs = cfg.x_grid()
    D = np.array([r.D for r in res])
    eU = np.exp([r.U_hat for r in res])
    F = np.array([r.fractions for r in res])
    shift = math.log(cfg.offset_constant())
    pred = np.array([eval_h(limit_law(cfg.m), xs + shift + r.U_hat) for r in res])
    i0 = int(np.argmin(np.abs(xs)))
    var_raw = float(np.var(F[:, i0], ddof=1))
    var_cen = float(np.var(F[:, i0] - pred[:, i0], ddof=1))
    mean_eU, se_eU = stats.mean_se(eU)
    tol = cfg.tolerances
    key = "path_lln_median_D" if cfg.kind == "gossip" else "path_lln_median_D_small_world"
    report = {
        "experiment": "path-lln", "Lambda": cfg.Lambda, "runs": cfg.runs,
        "median_D": float(np.median(D)), "mean_D": float(D.mean()),
        "quantiles_D": [float(q) for q in np.quantile(D, [0.1, 0.5, 0.9])],
        "mean_exp_U": mean_eU, "se_exp_U": se_eU,
        "var_uncentered_x0": var_raw, "var_centered_x0": var_cen,
        "checks": {
            "median_D": bool(np.median(D) <= tol[key]),
            "mean_exp_U": bool(abs(mean_eU - 1) <= tol["n_se"] * se_eU),
            "variance_collapse": bool(var_raw >= tol["variance_collapse_factor"] * var_cen),
        },
    }
    rows = [{"run": r.run, "x": float(x), "fraction": f, "predicted": float(pr), "U_hat": r.U_hat}
            for r, prow in zip(res, pred) for x, f, pr in zip(xs, r.fractions, prow)]
    return report, rows


def survival_oracle(x, C: float, W1, W2) -> np.ndarray:
    """E exp(-e^x C W1 W2) averaged over the supplied W pairs."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    prod = np.asarray(W1) * np.asarray(W2)
    return np.array([np.mean(np.exp(-math.exp(v) * C * prod)) for v in x])


def survival_exp_pair(x) -> np.ndarray:
    """E exp(-e^x W1 W2) for independent Exp(1) W's: int e^{-w} / (1 + e^x w) dw."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.array([integrate.quad(lambda w, a=math.exp(v): math.exp(-w) / (1 + a * w), 0, math.inf)[0]
                     for v in x])


def _distance_run(cfg: ExperimentConfig, idx: int) -> RunResult:
    p = cfg.params()
    T = float(cfg.time_at(cfg.x_max))
    st = spatial.simulate(p, T, cfg.probes, run_rng(cfg.seed, idx), record=False)
    return RunResult(idx, taus=st.probe_times().tolist())


def run_distance(cfg: ExperimentConfig):
    """Pooled first-passage survival against the two-W oracle."""
    p = cfg.params()
    res = ensemble(_distance_run, cfg, cfg.runs)
    taus = np.concatenate([r.taus for r in res])
    xs = cfg.x_grid()
    times = cfg.time_at(xs)
    emp = np.array([np.mean(taus > t) for t in times])
    C = cfg.offset_constant()
    rng = run_rng(cfg.seed, 10**6)
    if p.r == 1:
        oracle = survival_exp_pair(xs) if C == 1 else survival_oracle(
            xs, C, rng.exponential(size=cfg.w_pairs), rng.exponential(size=cfg.w_pairs))
    else:
        W = sample_W_r(p.r, rng, B=cfg.B, n=2 * cfg.w_pairs)
        oracle = survival_oracle(xs, C, W[: cfg.w_pairs], W[cfg.w_pairs:])
    gap = float(np.max(np.abs(emp - oracle)))
    report = {"experiment": "distance", "Lambda": cfg.Lambda, "runs": cfg.runs,
              "pooled_probes": int(len(taus)), "sup_gap": gap,
              "checks": {"sup_gap": bool(gap <= cfg.tolerances["distance_sup_gap"])}}
    rows = [{"x": float(x), "empirical": float(e), "oracle": float(o)} for x, e, o in zip(xs, emp, oracle)]
    return report, rows


def coverage_budget(cfg: ExperimentConfig) -> float:
    lg = math.log(cfg.Lambda)
    d = cfg.d
    return 2 * (72 * lg / math.factorial(d)) ** (1 / d) + cfg.tolerances["coverage_C"] * lg ** (1 / (d + 1))


def _coverage_run(cfg: ExperimentConfig, idx: int) -> RunResult:
    p = cfg.params()
    horizon = min(p.manifold.max_radius, (math.log(cfg.Lambda) + coverage_budget(cfg)) / p.lambda0)
    try:
        _, T = spatial.run_to_coverage(p, run_rng(cfg.seed, idx), horizon, n_probes=cfg.probes,
                                       record=False)
    except spatial.HorizonReached:
        T = math.inf
    return RunResult(idx, coverage_time=T)


def run_coverage(cfg: ExperimentConfig):
    """Coverage times against the additive budget over log Lambda."""
    p = cfg.params()
    res = ensemble(_coverage_run, cfg, cfg.runs)
    T = np.array([r.coverage_time for r in res])
    lg = math.log(cfg.Lambda)
    excess = p.lambda0 * T - lg
    budget = coverage_budget(cfg)
    ok = (excess >= 0) & (excess <= budget)
    ratio = p.lambda0 * T / lg
    c0 = covering_constant(p.manifold)
    report = {"experiment": "coverage", "Lambda": cfg.Lambda, "runs": cfg.runs,
              "budget": budget, "fraction_within_budget": float(ok.mean()),
              "fraction_ratio_in_1_2": float(np.mean((ratio >= 1) & (ratio <= 2))),
              "excess_quantiles": [float(q) for q in np.quantile(excess, [0.05, 0.5, 0.95])],
              "covering_constant": c0, "probes": cfg.probes if cfg.d > 1 else None,
              "checks": {"within_budget": bool(ok.mean() >= cfg.tolerances["coverage_fraction_ok"]),
                         "covering_constant_finite": bool(math.isfinite(c0))}}
    rows = [{"run": r.run, "coverage_time": r.coverage_time, "excess": float(e)} for r, e in zip(res, excess)]
    return report, rows


def pair_counts(spec, ages, n_place: int, rng: np.random.Generator, chunk: int = 2000) -> np.ndarray:
    """Intersecting-pair counts over independent uniform placements of the balls."""
    ages = np.asarray(ages, dtype=float)
    n = len(ages)
    i, j = np.triu_indices(n, 1)
    reach = spec.scale * (ages[i] + ages[j])
    out = []
    for start in range(0, n_place, chunk):
        k = min(chunk, n_place - start)
        c = sample_uniform(spec, rng, k * n).reshape(k, n, spec.d)
        dist = distance(spec, c[:, i, :], c[:, j, :])
        out.append(np.sum(dist <= reach, axis=1))
    return np.concatenate(out)


def run_intersections(cfg: ExperimentConfig):
    """Pair-intersection counts of randomly placed balls against the Poisson law."""
    p = cfg.params()
    spec = p.manifold
    rng = run_rng(cfg.seed, 0)
    ages = rng.uniform(0, math.log(cfg.Lambda) / p.lambda0, cfg.n_islands)
    N = pair_counts(spec, ages, cfg.placements, rng)
    mu = spatial.self_intersection_mean(spec, ages)
    mean, se = stats.mean_se(N)
    tv = stats.tv_to_poisson(N, mu)
    tv_se = stats.bootstrap_se(N, lambda s: stats.tv_to_poisson(s, mu), run_rng(cfg.seed, 1), cfg.bootstrap)
    bound = 4 * cfg.n_islands * spatial.p_plus(cfg.Lambda, cfg.d)
    n_se = cfg.tolerances["n_se"]
    report = {"experiment": "intersections", "Lambda": cfg.Lambda, "n_islands": cfg.n_islands,
              "placements": cfg.placements, "mu": mu, "mean_N": mean, "se_N": se,
              "dispersion": float(np.var(N, ddof=1) / mean) if mean > 0 else math.nan,
              "tv_poisson": tv, "tv_se": tv_se, "tv_bound": bound,
              "checks": {"mean": bool(abs(mean - mu) <= n_se * se),
                         "tv": bool(tv <= bound + n_se * tv_se)}}
    support, freq = np.unique(N, return_counts=True)
    rows = [{"k": int(k), "empirical": float(f / len(N))} for k, f in zip(support, freq)]
    return report, rows


EXPERIMENTS = {"path-lln": run_path_lln, "distance": run_distance, "coverage": run_coverage,
               "intersections": run_intersections}


def write_outputs(out_dir, name: str, cfg: ExperimentConfig, report: dict, rows: list) -> None:
    """report JSON plus a CSV table; no timestamps, so reruns are byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{name}_report.json", "w") as fh:
        json.dump({"config": cfg.to_dict(), "report": report}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if rows:
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
