"""Statistical comparators used by the experiments."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def ks_exp1(samples) -> float:
    """p-value of the KS test against Exp(1)."""
    return float(stats.kstest(np.asarray(samples, dtype=float), "expon").pvalue)


def ks_2samp(a, b) -> float:
    return float(stats.ks_2samp(a, b).pvalue)


def tv_to_poisson(counts, mu: float) -> float:
    """Exact total variation between the empirical law of ``counts`` and Po(mu).

    Mass that Po(mu) puts off the observed support is included.
    """
    counts = np.asarray(counts, dtype=np.int64)
    support, freq = np.unique(counts, return_counts=True)
    emp = freq / len(counts)
    pois = stats.poisson.pmf(support, mu)
    return float(0.5 * (np.sum(np.abs(emp - pois)) + (1.0 - pois.sum())))


def bootstrap_se(data, statistic, rng: np.random.Generator, n_boot: int = 1000) -> float:
    data = np.asarray(data)
    n = len(data)
    vals = np.empty(n_boot)
    for b in range(n_boot):
        vals[b] = statistic(data[rng.integers(0, n, n)])
    return float(vals.std(ddof=1))


def sign_test_less(a, b) -> float:
    """One-sided p-value that the median of ``a`` is below that of ``b`` (Mann-Whitney)."""
    return float(stats.mannwhitneyu(a, b, alternative="less").pvalue)
