"""Limiting coverage profile h and the Laplace transform of the limit W.

With ``s = log(theta)``, ``h(s) = 1 - phi(e^s)`` solves

    h(s) = 1 - exp(-I[h](s)),   I[h](s) = int_0^inf x^m/m! h(s - x) dx,

normalized by ``h(s) ~ e^s`` as ``s -> -inf`` (the limit W has mean one).
The integral is a one-sided convolution on a uniform grid; below the grid
``h`` is replaced by ``e^s``, which integrates in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.interpolate import PchipInterpolator

from .branching import sample_W_r


class SolverDidNotConverge(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    s_min: float = -16.0
    s_max: float = 12.0
    ds: float = 0.005

    def points(self) -> np.ndarray:
        n = int(round((self.s_max - self.s_min) / self.ds))
        return self.s_min + self.ds * np.arange(n + 1)


@dataclass(frozen=True)
class LawConstants:
    d: int

    @property
    def C_d(self) -> Fraction:
        return Fraction(math.factorial(self.d), self.d + 1)

    @property
    def Ctilde_d(self) -> Fraction:
        return Fraction(math.factorial(self.d - 1))


@dataclass
class LimitLaw:
    m: int
    grid: np.ndarray
    h_values: np.ndarray
    tol: float
    iterations: int
    residual: float
    _interp: PchipInterpolator = field(default=None, repr=False)

    def __post_init__(self):
        self._interp = PchipInterpolator(self.grid, self.h_values, extrapolate=False)

    @property
    def s_min(self) -> float:
        return float(self.grid[0])

    @property
    def s_max(self) -> float:
        return float(self.grid[-1])

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.grid, self.h_values]), delimiter=",",
                   header="s,h", comments="", fmt="%.10g")


def _kernels(grid: np.ndarray, m: int):
    x = grid - grid[0]
    k = x ** m / math.factorial(m)
    dk = m * x ** (m - 1) / math.factorial(m) if m > 0 else np.zeros_like(x)
    return k, dk


def _integral(h: np.ndarray, grid: np.ndarray, m: int) -> np.ndarray:
    """I[h] on the grid: corrected trapezoid on the grid plus the e^s tail below it.

    Direct convolution keeps the roundoff at machine level; an FFT product
    leaves noise around 1e-9 that stalls the iteration.
    """
    ds = grid[1] - grid[0]
    k, dk = _kernels(grid, m)
    conv = np.convolve(k, h)[: len(h)]
    trap = ds * (conv - 0.5 * k[0] * h - 0.5 * k * h[0])
    # Euler-Maclaurin end correction with f(x) = k(x) h(s - x)
    dh = np.gradient(h, ds, edge_order=2)
    f_near = dk[0] * h - k[0] * dh
    f_far = dk * h[0] - k * h[0]
    trap -= ds ** 2 / 12 * (f_far - f_near)
    a = grid - grid[0]
    tail = np.zeros_like(a)
    term = np.ones_like(a)
    for j in range(m + 1):
        tail += term
        term = term * a / (j + 1)
    return trap + math.exp(grid[0]) * tail


def fixed_point_residual(law: LimitLaw) -> float:
    image = -np.expm1(-_integral(law.h_values, law.grid, law.m))
    return float(np.max(np.abs(law.h_values - image)))


def solve_h(m: int, grid_spec: GridSpec = GridSpec(), tol: float = 1e-12,
            max_iter: int = 10_000) -> LimitLaw:
    """Picard iteration for h on a uniform grid in s = log(theta)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if math.exp(grid_spec.s_min) > 1e-6 or grid_spec.ds > 0.01 or tol < 1e-12:
        raise ValueError("need e^{s_min} <= 1e-6, ds <= 0.01 and tol >= 1e-12")
    grid = grid_spec.points()
    h = np.minimum(1.0, np.exp(grid))
    change = math.inf
    for it in range(1, max_iter + 1):
        new = -np.expm1(-_integral(h, grid, m))
        change = float(np.max(np.abs(new - h)))
        h = new
        if change < tol:
            break
    else:
        raise SolverDidNotConverge(f"m={m}: sup change {change:.3e} after {max_iter} iterations")
    law = LimitLaw(m, grid, h, tol, it, 0.0)
    law.residual = fixed_point_residual(law)
    return law


def eval_h(law: LimitLaw, x):
    """h at arbitrary points: monotone cubic inside the grid, e^x-shaped below, 1 above."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    lo = x < law.s_min
    mid = ~lo & (x <= law.s_max)
    # continuous continuation of the left asymptote h ~ e^s
    out[lo] = law.h_values[0] * np.exp(x[lo] - law.s_min)
    out[mid] = np.clip(law._interp(x[mid]), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def phi(law: LimitLaw, theta):
    """Laplace transform E exp(-theta W) of the limit W."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.where(theta > 0, 1.0 - eval_h(law, np.log(np.where(theta > 0, theta, 1.0))), 1.0)
    return float(out) if out.ndim == 0 else out


class EmpiricalCDF:
    def __init__(self, samples):
        self.samples = np.sort(np.asarray(samples, dtype=float))

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / len(self.samples)

    def sup_distance(self, cdf) -> float:
        """Kolmogorov distance to a continuous CDF given as a callable."""
        n = len(self.samples)
        F = np.asarray(cdf(self.samples))
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def gumbel_h_mc(m: int, n: int, rng: np.random.Generator, B: float = 1e3) -> EmpiricalCDF:
    """Empirical CDF of -G - log W, G standard Gumbel, W the limit with r = m + 1."""
    if n < 1000:
        raise ValueError("n must be at least 1000")
    G = rng.gumbel(size=n)
    if m == 0:
        W = rng.exponential(size=n)
    else:
        W = sample_W_r(m + 1, rng, B=B, n=n)
    return EmpiricalCDF(-G - np.log(W))


def w_tail_bounds(law: LimitLaw, w: float) -> dict:
    """P[W <= w] <= e exp(-c log(1/w)^{m+1}) for w < 1, and P[W >= w] <= 1/w."""
    if not w > 0:
        raise ValueError("w must be positive")
    c = (1.0 - phi(law, 1.0)) / math.factorial(law.m + 1)
    lower = math.e * math.exp(-c * math.log(1 / w) ** (law.m + 1)) if w < 1 else 1.0
    return {"lower_tail_bound": min(lower, 1.0), "upper_tail_bound": min(1.0 / w, 1.0), "c": c}
