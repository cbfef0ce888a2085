"""Markov branching approximation of the spread process.

Every birth starts a ball that grows linearly; new births arrive at a rate
proportional to the total volume (gossip) or total boundary (small-world)
of the balls.  The state is carried by the moments
``M_l(t) = sum_j (t - tau_j)^l``, and the time to the next birth is found by
inverting the cumulative intensity, which is a polynomial in the elapsed
time.

In the scaled clock ``u = lambda0 * t`` the process no longer depends on
``rho``: the cumulative intensity is the increment of
``H_r = M_r lambda0^r / r!``.  The fast paths below run in that clock.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as kern
from .geometry import ManifoldSpec

KINDS = ("gossip", "small-world")
DEFAULT_EVENT_CAP = 10_000_000


class EventCapExceeded(RuntimeError):
    """A run produced more births than the configured cap."""


def _seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


@dataclass(frozen=True)
class ProcessParams:
    kind: str
    rho: float
    manifold: ManifoldSpec

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")

    @property
    def d(self) -> int:
        return self.manifold.d

    @property
    def r(self) -> int:
        return self.d + 1 if self.kind == "gossip" else self.d

    @property
    def m(self) -> int:
        """Power in the limiting integral equation; r = m + 1."""
        return self.r - 1

    @property
    def lambda0(self) -> float:
        return (math.factorial(self.d) * self.rho * self.manifold.vK) ** (1.0 / self.r)

    @property
    def Lambda(self) -> float:
        return self.manifold.L * self.lambda0 ** self.d / self.manifold.vK

    @property
    def rate_const(self) -> float:
        """c with cumulative intensity = c * (M_r(t + D) - M_r(t))."""
        c = self.rho * self.manifold.vK
        return c / (self.d + 1) if self.kind == "gossip" else c

    @classmethod
    def from_lambda0(cls, kind: str, lambda0: float, manifold: ManifoldSpec) -> "ProcessParams":
        r = manifold.d + 1 if kind == "gossip" else manifold.d
        rho = lambda0 ** r / (math.factorial(manifold.d) * manifold.vK)
        return cls(kind, rho, manifold)


@dataclass
class MomentState:
    r: int
    t: float = 0.0
    births: list = field(default_factory=lambda: [0.0])
    M: np.ndarray = None

    def __post_init__(self):
        if self.M is None:
            self.M = np.zeros(self.r + 1)
            self.M[0] = len(self.births)
            for l in range(1, self.r + 1):
                self.M[l] = sum((self.t - b) ** l for b in self.births)

    @classmethod
    def initial(cls, params: ProcessParams) -> "MomentState":
        return cls(r=params.r)

    def recompute(self) -> np.ndarray:
        ages = self.t - np.asarray(self.births)
        return np.array([np.sum(ages ** l) for l in range(self.r + 1)])

    def copy(self) -> "MomentState":
        return MomentState(self.r, self.t, list(self.births), self.M.copy())


def intensity_coeffs(params: ProcessParams, M: np.ndarray) -> np.ndarray:
    """Coefficients a_k of the cumulative intensity sum_k a_k D^k."""
    r = params.r
    a = np.zeros(r + 1)
    for k in range(1, r + 1):
        a[k] = params.rate_const * math.comb(r, k) * M[r - k]
    return a


def cumulative_intensity(params: ProcessParams, state: MomentState, delta: float) -> float:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    f, _ = kern.poly_eval(intensity_coeffs(params, state.M), float(delta))
    return float(f)


def next_event_delay(params: ProcessParams, state: MomentState, rng: np.random.Generator,
                     E: Optional[float] = None) -> float:
    if E is None:
        E = rng.exponential()
    return float(kern.invert_poly(intensity_coeffs(params, state.M), float(E)))


def advance(state: MomentState, delta: float) -> MomentState:
    """Move the clock forward with no birth."""
    kern.shift_moments(state.M, float(delta))
    state.t += delta
    return state


def step(params: ProcessParams, state: MomentState, rng: np.random.Generator) -> MomentState:
    """Advance to the next birth and record it (mutates and returns ``state``)."""
    delta = next_event_delay(params, state, rng)
    advance(state, delta)
    state.births.append(state.t)
    state.M[0] += 1.0
    return state


def H_from_M(params: ProcessParams, M: np.ndarray) -> np.ndarray:
    lam = params.lambda0
    return np.array([M[i] * lam ** i / math.factorial(i) for i in range(len(M))])


def H_vector(params: ProcessParams, state: MomentState):
    """(H_0..H_r, hhat = H_0 - H_r)."""
    H = H_from_M(params, state.M)
    return H, float(H[0] - H[-1])


def W_from_H(H: np.ndarray, u: float) -> dict:
    r = len(H) - 1
    damp = math.exp(-u)
    return {"W_vec": r * damp * H[1:], "W_star": damp * float(np.sum(H[1:])),
            "W_tilde": damp * float(np.sum(H[:r]))}


def W_statistics(params: ProcessParams, state: MomentState) -> dict:
    H, _ = H_vector(params, state)
    return W_from_H(H, params.lambda0 * state.t)


def _scaled_moments(births_u: np.ndarray, u: float, r: int) -> np.ndarray:
    """H_0..H_r at scaled time u from scaled birth times (born at or before u)."""
    ages = u - births_u[births_u <= u]
    H = np.empty(r + 1)
    term = np.ones_like(ages)
    for i in range(r + 1):
        H[i] = term.sum()
        term = term * ages / (i + 1)
    return H


@dataclass(frozen=True)
class Trajectory:
    """A completed branching run; all times are in real (unscaled) units."""
    params: ProcessParams
    births: np.ndarray
    jumps: np.ndarray
    T: float
    hit_time: float = math.inf

    @property
    def n_births(self) -> int:
        return len(self.births)

    def _check(self, t):
        if t < 0 or t > self.T * (1 + 1e-12):
            raise ValueError(f"t={t} outside the simulated range [0, {self.T}]")

    def H(self, t: float) -> np.ndarray:
        self._check(t)
        lam = self.params.lambda0
        return _scaled_moments(self.births * lam, t * lam, self.params.r)

    def M(self, t: float) -> np.ndarray:
        self._check(t)
        ages = t - self.births[self.births <= t]
        return np.array([np.sum(ages ** l) for l in range(self.params.r + 1)])

    def W(self, t: float) -> dict:
        return W_from_H(self.H(t), self.params.lambda0 * t)

    def checkpoints(self, times) -> list[dict]:
        rows = []
        for t in times:
            H = self.H(t)
            M = self.M(t)
            row = {"t": float(t)}
            row.update({f"M_{i}": float(v) for i, v in enumerate(M)})
            row.update({f"H_{i}": float(v) for i, v in enumerate(H)})
            row["W_tilde"] = W_from_H(H, self.params.lambda0 * t)["W_tilde"]
            rows.append(row)
        return rows

    def to_csv(self, path, times) -> None:
        rows = self.checkpoints(times)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def simulate_to(params: ProcessParams, T: float, rng: np.random.Generator,
                max_events: int = DEFAULT_EVENT_CAP, level: float = 0.0) -> Trajectory:
    """Run the branching process on [0, T] from one island born at 0."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    lam = params.lambda0
    kern.seed(_seed_from(rng))
    births, jumps, _, _, hit, status = kern.branch_run(params.r, T * lam, float(level), False,
                                                       max_events)
    if status:
        raise EventCapExceeded(f"more than {max_events} births before t={T}")
    return Trajectory(params, births / lam, jumps, float(T), hit / lam)


def sample_W(params: ProcessParams, rng: np.random.Generator, B: float = 1e3, n: Optional[int] = None,
             max_events: int = DEFAULT_EVENT_CAP):
    """Martingale W_tilde at T = log(B)/lambda0, a proxy for the limit W.

    The bias shrinks geometrically in B and is not corrected.  The draw
    does not depend on lambda0 except through r.
    """
    return sample_W_r(params.r, rng, B, n, max_events)


def sample_W_r(r: int, rng: np.random.Generator, B: float = 1e3, n: Optional[int] = None,
               max_events: int = DEFAULT_EVENT_CAP):
    if not B > 1:
        raise ValueError("budget B must exceed 1")
    kern.seed(_seed_from(rng))
    out, status = kern.sample_w_tilde(r, math.log(B), 1 if n is None else n, max_events)
    if status:
        raise EventCapExceeded(f"more than {max_events} births in one W draw")
    return float(out[0]) if n is None else out


def hitting_time_tauK(params: ProcessParams, K: float, rng: np.random.Generator,
                      max_events: int = DEFAULT_EVENT_CAP) -> float:
    """First time H_r reaches K (exact crossing inside the inter-birth gap)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    kern.seed(_seed_from(rng))
    _, _, _, _, hit, status = kern.branch_run(params.r, math.inf, float(K), True, max_events)
    if status:
        raise EventCapExceeded(f"more than {max_events} births before H_r reached {K}")
    return hit / params.lambda0


def K_of_Lambda(Lambda: float) -> float:
    return (40 * math.log(Lambda)) ** 3


@dataclass(frozen=True)
class GrowthDiagnostics:
    K: float
    s: float
    r: int
    eps_K: float
    beta_r: float
    C_a: float
    c_c: float
    theta: float
    H_max_scaled: float
    H_r: float
    clock_dev: float
    A1: bool
    A2: bool
    A3: bool

    @property
    def A(self) -> bool:
        return self.A1 and self.A2 and self.A3


def growth_constants(r: int, K: float) -> dict:
    eps = 5 * K ** (-1.0 / 3)
    rf = math.factorial(r) ** (1.0 / r)
    C_a = 3 * math.exp(rf)
    return {"eps_K": eps,
            "beta_r": 0.5 * (1 - eps) if r <= 6 else 1 - math.cos(2 * math.pi / r),
            "C_a": C_a, "c_c": 2 * rf / math.log(6 / 5), "theta": C_a * math.exp(1 / 80)}


def clock_deviation(jumps: np.ndarray, u_end: float, eta: float) -> float:
    """sup over [0, u_end] of (u v 1)^{-(1+eta)/2} |Z(u) - u|.

    Z counts the unit-rate clock's jumps.  Between jumps |Z - u| is linear and
    the weight only moves the maximum to interval ends, so checking both sides
    of each jump, u = 1 and u_end is exact.
    """
    p = (1 + eta) / 2
    u = np.asarray(jumps, dtype=float)
    u = u[u <= u_end]
    k = np.arange(1, len(u) + 1, dtype=float)
    pts = [np.abs(k - 1 - u), np.abs(k - u)]
    wts = np.maximum(u, 1.0) ** (-p)
    best = float(np.max(np.concatenate(pts) * np.tile(wts, 2))) if len(u) else 0.0
    for x in (min(1.0, u_end), u_end):
        z = np.searchsorted(u, x, side="right")
        best = max(best, abs(z - x) * max(x, 1.0) ** (-p))
    return best


def diagnostics_at(params: ProcessParams, traj: Trajectory, s: float, K: float,
                   eta: Optional[float] = None) -> GrowthDiagnostics:
    """Indicators of the good-growth events at time s for level K.

    A1: e^{-lambda0 s} max_i H_i(s) <= theta K.
    A2: H_r(s) >= K.
    A3: the unit-rate clock driving births stays within K^{(1-eta)/2}
        of its mean, in the weighted sup norm, up to H_r(s).
    """
    const = growth_constants(params.r, K)
    eta = const["eps_K"] if eta is None else eta
    H = traj.H(s)
    # jumps[0] is the initial island, not a clock jump
    dev = clock_deviation(traj.jumps[1:][traj.births[1:] <= s], float(H[-1]), eta)
    hmax = math.exp(-params.lambda0 * s) * float(np.max(H))
    return GrowthDiagnostics(
        K=K, s=s, r=params.r, H_max_scaled=hmax, H_r=float(H[-1]), clock_dev=dev,
        A1=hmax <= const["theta"] * K, A2=float(H[-1]) >= K,
        A3=dev <= K ** ((1 - eta) / 2), **const)
