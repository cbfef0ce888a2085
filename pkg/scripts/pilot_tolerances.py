"""Small pilot ensembles behind the default tolerances in harness.config.

Prints the statistic each tolerance guards, next to the tolerance itself.
Slow-ish: about two minutes on one core with the defaults.
"""
import argparse

from gossipsim.harness import ExperimentConfig
from gossipsim.harness.config import DEFAULT_TOLERANCES, TOLERANCE_NOTES
from gossipsim.harness.experiments import run_coverage, run_distance, run_intersections, run_path_lln


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--Lambda", type=float, default=1e4)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args()
    base = dict(Lambda=a.Lambda, runs=a.runs, seed=a.seed)

    rep, _ = run_path_lln(ExperimentConfig(**base))
    seen = {"path_lln_median_D": rep["median_D"],
            "variance_collapse_factor": rep["var_uncentered_x0"] / rep["var_centered_x0"]}
    rep, _ = run_path_lln(ExperimentConfig(kind="small-world", d=2, probes=10_000, **base))
    seen["path_lln_median_D_small_world"] = rep["median_D"]
    rep, _ = run_distance(ExperimentConfig(probes=25, **base))
    seen["distance_sup_gap"] = rep["sup_gap"]
    rep, _ = run_coverage(ExperimentConfig(**base))
    seen["coverage_fraction_ok"] = rep["fraction_within_budget"]
    rep, _ = run_intersections(ExperimentConfig(Lambda=a.Lambda, seed=a.seed))
    seen["n_se"] = abs(rep["mean_N"] - rep["mu"]) / rep["se_N"]

    for k, v in seen.items():
        print(f"{k:32s} pilot {v:8.4f}   tolerance {DEFAULT_TOLERANCES[k]:6.3f}   ({TOLERANCE_NOTES[k]})")


if __name__ == "__main__":
    main()
