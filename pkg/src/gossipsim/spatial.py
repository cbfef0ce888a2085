"""Exact simulation of the spread process by thinning a dominating branching rate.

Candidates for long-range contacts arrive at rate ``rho * sum_j |K(P_j, t - tau_j)|``
(gossip) or ``rho * sum_j |dK(P_j, t - tau_j)|`` (small-world), ignoring
overlaps.  Each candidate picks a source island in proportion to its term,
a location Q in (or on) that ball, and is accepted only if the source is the
unique owner of Q: the earliest-born island covering Q for gossip, the only
island whose boundary carries Q for small-world.  Accepted contacts reach a
uniform mark P, which starts a new island unless P is already covered.
This realizes the rate ``rho * |Y(t)|`` (resp. ``rho * |dY(t)|``) exactly.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as kern
from .branching import DEFAULT_EVENT_CAP, EventCapExceeded, ProcessParams, _seed_from, intensity_coeffs
from .geometry import ManifoldSpec, RadiusTooLarge, distance, sample_uniform

DISPOSITIONS = ("rejected_owner", "rejected_outside", "accepted_new_island", "accepted_mark_covered")
INDEX_THRESHOLD = 1000
MAX_CELLS = 4_000_000


class HorizonReached(RuntimeError):
    """The run reached its time horizon before the requested event."""


@dataclass
class EventLog:
    t: np.ndarray
    src: np.ndarray
    loc: np.ndarray
    mark: np.ndarray
    disposition: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def accepted(self) -> np.ndarray:
        return self.disposition >= kern.ACCEPTED_NEW_ISLAND

    def records(self):
        for i in range(len(self.t)):
            mark = None if np.isnan(self.mark[i, 0]) else [float(v) for v in self.mark[i]]
            yield {"t": float(self.t[i]), "src": int(self.src[i]),
                   "loc": [float(v) for v in self.loc[i]], "mark": mark,
                   "disposition": DISPOSITIONS[self.disposition[i]]}

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


@dataclass
class SpatialState:
    params: ProcessParams
    centers: np.ndarray
    births: np.ndarray
    t: float
    log: Optional[EventLog]
    probes: np.ndarray
    n_candidates: int = 0
    _probe_times: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def spec(self) -> ManifoldSpec:
        return self.params.manifold

    @property
    def n_islands(self) -> int:
        return len(self.births)

    @property
    def p0(self) -> np.ndarray:
        return self.centers[0]

    def probe_times(self) -> np.ndarray:
        if self._probe_times is None:
            self._probe_times = first_cover_times(self, self.probes)
        return self._probe_times

    def probes_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["probe", "tau"])
            for i, tau in enumerate(first_passage_times(self)):
                w.writerow([i, repr(float(tau))])


def first_cover_times(state: SpatialState, points) -> np.ndarray:
    """min over islands of birth + distance / scale, then capped at +inf beyond the horizon."""
    spec = state.spec
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    out = kern.probe_first_cover(state.centers, state.births, pts, np.asarray(spec.sides),
                                 spec.torus, spec.ball_shape == "sup", spec.scale)
    out[out > state.t] = math.inf
    return out


class Simulator:
    """Resumable driver around the compiled thinning kernel."""

    def __init__(self, params: ProcessParams, rng: np.random.Generator, n_probes: int = 0,
                 probes=None, p0=None, record: bool = True, max_events: int = DEFAULT_EVENT_CAP,
                 index_threshold: int = INDEX_THRESHOLD, capacity: int = 1024):
        self.params = params
        spec = params.manifold
        self.spec = spec
        d = spec.d
        self.kind = 0 if params.kind == "gossip" else 1
        p0 = sample_uniform(spec, rng) if p0 is None else np.asarray(p0, dtype=float)
        if probes is None:
            probes = sample_uniform(spec, rng, n_probes) if n_probes else np.zeros((0, d))
        self.probes = np.ascontiguousarray(probes, dtype=float).reshape(-1, d)
        e = d if self.kind == 0 else d - 1
        self.centers = np.zeros((capacity, d))
        self.births = np.zeros(capacity)
        self.prefix = np.zeros((capacity + 1, e + 1))
        self.centers[0] = p0
        self.prefix[1, 0] = 1.0
        self.M = np.zeros(params.r + 1)
        self.M[0] = 1.0
        self.counts = np.zeros(6, dtype=np.int64)
        self.counts[0] = 1
        self.tstate = np.zeros(3)
        self.record = record
        n_log = capacity if record else 0
        self.log = [np.zeros(n_log), np.zeros(n_log, dtype=np.int64), np.zeros((n_log, d)),
                    np.zeros((n_log, d)), np.zeros(n_log, dtype=np.int8)]
        self.max_events = max_events
        self.index_threshold = index_threshold
        # uniform grid index: cells about two e-folding radii wide
        lam = params.lambda0
        target = 2 * spec.scale / lam if lam > 0 else max(spec.sides)
        per_axis = max(1, int(MAX_CELLS ** (1.0 / d)))
        self.n_c = int(min(per_axis, max(1, math.floor(min(spec.sides) / target))))
        self.cell_sizes = np.asarray(spec.sides) / self.n_c
        self.epoch_len = float(np.min(self.cell_sizes)) / spec.scale
        self.head = np.full(self.n_c ** d, -1, dtype=np.int64)
        self.ent_isl = np.zeros(16 * capacity, dtype=np.int64)
        self.ent_next = np.zeros(16 * capacity, dtype=np.int64)
        kern.seed(_seed_from(rng))

    @property
    def t(self) -> float:
        return float(self.tstate[0])

    @property
    def n(self) -> int:
        return int(self.counts[0])

    def _grow(self, code):
        if code == kern.NEED_ISLANDS:
            cap = 2 * self.centers.shape[0]
            n = self.n
            c = np.zeros((cap, self.spec.d))
            c[:n] = self.centers[:n]
            b = np.zeros(cap)
            b[:n] = self.births[:n]
            p = np.zeros((cap + 1, self.prefix.shape[1]))
            p[:n + 1] = self.prefix[:n + 1]
            self.centers, self.births, self.prefix = c, b, p
        elif code == kern.NEED_LOG:
            m = int(self.counts[1])
            grown = []
            for arr in self.log:
                g = np.zeros((2 * arr.shape[0],) + arr.shape[1:], dtype=arr.dtype)
                g[:m] = arr[:m]
                grown.append(g)
            self.log = grown
        elif code == kern.NEED_POOL:
            size = 2 * self.ent_isl.shape[0]
            self.ent_isl = np.zeros(size, dtype=np.int64)
            self.ent_next = np.zeros(size, dtype=np.int64)

    def advance(self, t_stop: float) -> None:
        if t_stop > self.spec.max_radius:
            raise RadiusTooLarge(f"horizon {t_stop} exceeds the torus cap {self.spec.max_radius}")
        if t_stop <= self.t:
            return
        spec = self.spec
        while True:
            code = kern.spatial_run(
                self.kind, np.asarray(spec.sides), spec.torus, spec.ball_shape == "sup", spec.scale,
                self.params.rate_const, self.centers, self.births, self.prefix, self.M,
                self.counts, self.tstate, float(t_stop), self.max_events, self.index_threshold,
                self.cell_sizes, self.n_c, self.epoch_len, self.head, self.ent_isl, self.ent_next,
                self.record, *self.log)
            if code == kern.DONE:
                return
            if code == kern.EVENT_CAP:
                raise EventCapExceeded(f"more than {self.max_events} candidate events")
            self._grow(code)

    def state(self) -> SpatialState:
        n = self.n
        log = None
        if self.record:
            m = int(self.counts[1])
            log = EventLog(*(arr[:m].copy() for arr in self.log))
        return SpatialState(self.params, self.centers[:n].copy(), self.births[:n].copy(), self.t,
                            log, self.probes, int(self.counts[2]))


def simulate(params: ProcessParams, T: float, n_probes: int, rng: np.random.Generator, **kw) -> SpatialState:
    """Run the exact process from one island at a uniform point up to time T."""
    sim = Simulator(params, rng, n_probes=n_probes, **kw)
    sim.advance(T)
    return sim.state()


# ---------------------------------------------------------------------------
# one-dimensional exact geometry

def d1_gaps(spec: ManifoldSpec, centers, births, t: float):
    """Uncovered gaps at time t and the speed at which each one closes."""
    if spec.d != 1:
        raise ValueError("exact interval geometry needs d = 1")
    L = spec.sides[0]
    c = np.asarray(centers, dtype=float).reshape(-1)
    b = np.asarray(births, dtype=float)
    live = b <= t
    c, R = c[live], spec.scale * (t - b[live])
    if len(c) == 0:
        return np.array([L]), np.array([0.0])
    if spec.torus:
        if np.any(2 * R >= L):
            return np.zeros(0), np.zeros(0)
        lo = np.mod(c - R, L)
        hi = lo + 2 * R
        order = np.argsort(lo, kind="stable")
        lo, hi = lo[order], hi[order]
        reach = np.maximum.accumulate(hi)
        wrap_end = reach[-1] - L
        ends = np.maximum(reach[:-1], wrap_end)
        gaps = np.concatenate([lo[1:] - ends, [lo[0] - wrap_end]])
        gaps = gaps[gaps > 0]
        return gaps, np.full(len(gaps), 2 * spec.scale)
    lo = np.clip(c - R, 0, L)
    hi = np.clip(c + R, 0, L)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    inner = lo[1:] - reach[:-1]
    gaps = [inner[inner > 0]]
    speeds = [np.full(int(np.sum(inner > 0)), 2 * spec.scale)]
    for g in (lo[0], L - reach[-1]):
        if g > 0:
            gaps.append([g])
            speeds.append([spec.scale])
    return np.concatenate(gaps), np.concatenate(speeds)


def union_length_d1(spec: ManifoldSpec, centers, births, t: float) -> float:
    gaps, _ = d1_gaps(spec, centers, births, t)
    return float(spec.sides[0] - gaps.sum())


def _gap_integral(gaps, speeds, dt):
    """int_0^dt sum_g max(g - v s, 0) ds."""
    if len(gaps) == 0 or dt <= 0:
        return 0.0
    close = np.minimum(dt, gaps / speeds)
    return float(np.sum(gaps * close - 0.5 * speeds * close ** 2))


def compensator_d1(state: SpatialState, times) -> np.ndarray:
    """rho * int_0^t |Y(s)| ds at each requested time (gossip, d = 1)."""
    spec = state.spec
    L = spec.sides[0]
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    out = np.empty(len(times))
    knots = np.concatenate([state.births, [math.inf]])
    acc = 0.0
    k = 0
    t_prev = 0.0
    gaps, speeds = d1_gaps(spec, state.centers, state.births, 0.0)
    for i in order:
        t = times[i]
        while knots[k + 1] <= t:
            dt = knots[k + 1] - t_prev
            acc += L * dt - _gap_integral(gaps, speeds, dt)
            t_prev = knots[k + 1]
            k += 1
            gaps, speeds = d1_gaps(spec, state.centers, state.births, t_prev)
        out[i] = state.params.rho * (acc + L * (t - t_prev) - _gap_integral(gaps, speeds, t - t_prev))
    return out


def accepted_compensator_increments(state: SpatialState) -> np.ndarray:
    """Time-changed gaps between accepted contacts; Exp(1) if the thinning is exact."""
    if state.params.kind != "gossip" or state.spec.d != 1 or state.log is None:
        raise ValueError("needs a recorded d = 1 gossip run")
    acc_t = state.log.t[state.log.accepted]
    comp = compensator_d1(state, np.concatenate([acc_t, [state.t]]))
    return np.diff(np.concatenate([[0.0], comp[:-1]]))


# ---------------------------------------------------------------------------
# covered fraction, first passage, coverage

def covered_fraction(state: SpatialState, t: float, method: str = "auto"):
    """(fraction, standard error); the exact d = 1 method has zero error."""
    if t > state.t * (1 + 1e-12):
        raise ValueError("t is beyond the simulated horizon")
    if method == "auto":
        method = "exact_d1" if state.spec.d == 1 else "probe"
    if method == "exact_d1":
        if state.spec.d != 1:
            raise ValueError("exact covered fraction is only available in d = 1")
        return union_length_d1(state.spec, state.centers, state.births, t) / state.spec.sides[0], 0.0
    if method != "probe":
        raise ValueError(f"unknown method {method}")
    taus = state.probe_times()
    if len(taus) == 0:
        raise ValueError("no probes")
    p = float(np.mean(taus <= t))
    return p, math.sqrt(p * (1 - p) / len(taus))


def canonical_owner(spec: ManifoldSpec, centers, births, q, t: float) -> int:
    """Index of the earliest-born island covering q at t (ties by index), or -1."""
    births = np.asarray(births, dtype=float)
    hit = (births <= t) & (distance(spec, np.asarray(centers).reshape(len(births), -1), q)
                           <= spec.scale * (t - births))
    if not np.any(hit):
        return -1
    idx = np.flatnonzero(hit)
    return int(idx[np.lexsort((idx, births[idx]))[0]])


def first_passage_times(state: SpatialState) -> np.ndarray:
    return state.probe_times()


def coverage_time(params: ProcessParams, state: SpatialState) -> float:
    """Exact in d = 1; otherwise the time at which the last probe is covered."""
    spec = params.manifold
    if spec.d == 1:
        gaps, _ = d1_gaps(spec, state.centers, state.births, state.t)
        if len(gaps):
            raise HorizonReached(f"not covered by t={state.t}")
        # nothing is born after coverage, so the last birth fixes the closing time
        tb = float(state.births[-1])
        gaps, speeds = d1_gaps(spec, state.centers, state.births, tb)
        return tb + (float(np.max(gaps / speeds)) if len(gaps) else 0.0)
    taus = state.probe_times()
    if len(taus) == 0 or not np.all(np.isfinite(taus)):
        raise HorizonReached(f"some probes uncovered at t={state.t}")
    return float(np.max(taus))


def run_to_coverage(params: ProcessParams, rng: np.random.Generator, horizon: float,
                    n_probes: int = 0, chunk: Optional[float] = None, **kw):
    """Advance in chunks until C (or every probe) is covered; returns (state, T_cov)."""
    sim = Simulator(params, rng, n_probes=n_probes, **kw)
    if params.manifold.d > 1 and n_probes == 0:
        raise ValueError("coverage in d >= 2 is detected with probes")
    chunk = chunk or 0.25 / max(params.lambda0, 1e-300)
    t = 0.0
    while True:
        t = min(t + chunk, horizon)
        sim.advance(t)
        state = sim.state()
        try:
            return state, coverage_time(params, state)
        except HorizonReached:
            if t >= horizon:
                raise


# ---------------------------------------------------------------------------
# coupled branching run with ghost labels

@dataclass
class CoupledRun:
    params: ProcessParams
    centers: np.ndarray
    births: np.ndarray
    parents: np.ndarray
    cand_t: np.ndarray
    cand_src: np.ndarray
    cand_loc: np.ndarray
    ghost: np.ndarray
    ghost_real_only: np.ndarray
    T: float

    @property
    def n_islands(self) -> int:
        return len(self.births)

    def ghost_fraction(self, t: float, real_only: bool = False) -> float:
        g = self.ghost_real_only if real_only else self.ghost
        alive = self.births <= t
        return float(np.mean(g[alive]))

    def real_islands(self, real_only: bool = False):
        g = self.ghost_real_only if real_only else self.ghost
        keep = ~g
        return self.centers[keep], self.births[keep]


def _ball_point(spec, center, R, on_sphere, rng):
    d = spec.d
    if spec.ball_shape == "sup":
        off = rng.uniform(-R, R, d)
        if on_sphere:
            ax = rng.integers(d)
            off[ax] = R if rng.random() < 0.5 else -R
    else:
        g = rng.standard_normal(d)
        g /= np.linalg.norm(g)
        off = g * (R if on_sphere else R * rng.random() ** (1.0 / d))
    return center + off


def coupled_ghost_run(params: ProcessParams, T: float, rng: np.random.Generator,
                      p0=None, max_events: int = 200_000) -> CoupledRun:
    """Full branching process X* in space, labelled chronologically.

    A candidate (and the island it creates) is a ghost if its source is a
    ghost, if its location is already owned by another listed island, or if
    its mark lands in the covered region.  ``ghost`` tests against all listed
    islands; ``ghost_real_only`` repeats the labelling against non-ghosts only.
    """
    spec = params.manifold
    if T > spec.max_radius:
        raise RadiusTooLarge(f"horizon {T} exceeds the torus cap {spec.max_radius}")
    d = spec.d
    gossip = params.kind == "gossip"
    e = d if gossip else d - 1
    centers = [sample_uniform(spec, rng) if p0 is None else np.asarray(p0, dtype=float)]
    births = [0.0]
    parents = [-1]
    ghost = [False]
    ghost_ro = [False]
    cand = []
    M = np.zeros(params.r + 1)
    M[0] = 1.0
    t = 0.0
    sides = np.asarray(spec.sides)

    def covered_by(Q, idx, strict):
        if not len(idx):
            return False
        C = np.asarray([centers[i] for i in idx])
        R = spec.scale * (t - np.asarray([births[i] for i in idx]))
        dist = distance(spec, C, Q)
        return bool(np.any(dist < R) if strict else np.any(dist <= R))

    while True:
        delta = kern.invert_poly(intensity_coeffs(params, M), rng.exponential())
        if t + delta >= T:
            break
        kern.shift_moments(M, delta)
        t += delta
        b = np.asarray(births)
        w = (t - b) ** e
        j = int(min(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"), len(b) - 1))
        Q = _ball_point(spec, centers[j], spec.scale * (t - births[j]), not gossip, rng)
        P = sample_uniform(spec, rng)
        outside = False
        if spec.torus:
            Q = np.mod(Q, sides)
        else:
            outside = bool(np.any((Q < 0) | (Q > sides)))
        labels = []
        for pool_ghost in (ghost, None):
            pool = range(len(births)) if pool_ghost is None else \
                [i for i in range(len(births)) if not ghost_ro[i]]
            src_ghost = (ghost if pool_ghost is None else ghost_ro)[j]
            if gossip:
                owners = [i for i in pool if i < j]
                dup = covered_by(Q, owners, strict=False)
            else:
                dup = covered_by(Q, [i for i in pool if i != j], strict=True)
            labels.append(src_ghost or outside or dup or covered_by(P, list(pool), strict=False))
        cand.append((t, j, Q))
        centers.append(P)
        births.append(t)
        parents.append(j)
        ghost.append(labels[0])
        ghost_ro.append(labels[1])
        M[0] += 1.0
        if len(births) > max_events:
            raise EventCapExceeded(f"more than {max_events} islands")
    ct = np.array([c[0] for c in cand])
    return CoupledRun(params, np.asarray(centers), np.asarray(births), np.asarray(parents),
                      ct, np.array([c[1] for c in cand], dtype=np.int64),
                      np.asarray([c[2] for c in cand]).reshape(-1, d), np.asarray(ghost),
                      np.asarray(ghost_ro), float(T))


# ---------------------------------------------------------------------------
# intersections of randomly placed balls

@dataclass(frozen=True)
class IntersectionStats:
    N: int
    mu: float
    N_cross: Optional[int] = None
    mu_cross: Optional[float] = None


def _moments(ages, d):
    ages = np.asarray(ages, dtype=float)
    return np.array([np.sum(ages ** l) for l in range(d + 1)])


def self_intersection_mean(spec: ManifoldSpec, ages) -> float:
    d = spec.d
    M = _moments(ages, d)
    tot = sum(math.comb(d, l) * (M[l] * M[d - l] - M[d]) for l in range(d + 1))
    return 0.5 * spec.vK * tot / spec.L


def cross_intersection_mean(spec: ManifoldSpec, ages, ages2) -> float:
    d = spec.d
    M, M2 = _moments(ages, d), _moments(ages2, d)
    return spec.vK * sum(math.comb(d, l) * M[l] * M2[d - l] for l in range(d + 1)) / spec.L


def p_plus(Lambda: float, d: int) -> float:
    return (3 * math.log(Lambda)) ** d / Lambda


def _pair_hits(spec, c1, a1, c2, a2, same):
    hits = 0
    for i in range(len(a1)):
        lo = i + 1 if same else 0
        if lo >= len(a2):
            continue
        dist = distance(spec, c2[lo:], c1[i])
        hits += int(np.sum(dist <= spec.scale * (a1[i] + a2[lo:])))
    return hits


def intersection_stats(spec: ManifoldSpec, centers, ages, centers2=None, ages2=None) -> IntersectionStats:
    """Count intersecting ball pairs (within one set, and across two sets)."""
    c = np.asarray(centers, dtype=float).reshape(-1, spec.d)
    a = np.asarray(ages, dtype=float)
    N = _pair_hits(spec, c, a, c, a, same=True)
    mu = self_intersection_mean(spec, a)
    if centers2 is None:
        return IntersectionStats(N, mu)
    c2 = np.asarray(centers2, dtype=float).reshape(-1, spec.d)
    a2 = np.asarray(ages2, dtype=float)
    return IntersectionStats(N, mu, _pair_hits(spec, c, a, c2, a2, same=False),
                             cross_intersection_mean(spec, a, a2))
