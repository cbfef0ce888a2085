"""Flat tori and axis-aligned rectangles, with their metric balls.

A ball ``K(P, s)`` is the metric ball of radius ``scale * s`` around ``P``,
so that its volume is ``s**d * vK``.  ``s`` plays the role of elapsed time
and ``scale`` of the propagation speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TOPOLOGIES = ("torus", "rectangle")
BALL_SHAPES = ("round", "sup")


class RadiusTooLarge(ValueError):
    """A ball would wrap onto itself on the torus."""


def unit_ball_volume(d: int, ball_shape: str) -> float:
    if ball_shape == "sup":
        return 2.0 ** d
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class ManifoldSpec:
    d: int
    sides: tuple
    topology: str = "torus"
    ball_shape: str = "round"
    scale: float = 1.0
    vK: Optional[float] = None
    c_g: float = 0.0

    def __post_init__(self):
        sides = tuple(float(a) for a in np.atleast_1d(self.sides))
        object.__setattr__(self, "sides", sides)
        if self.d < 1 or len(sides) != self.d:
            raise ValueError(f"need d >= 1 and d side lengths, got d={self.d}, sides={sides}")
        if any(not (a > 0 and math.isfinite(a)) for a in sides):
            raise ValueError("side lengths must be positive and finite")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if self.ball_shape not in BALL_SHAPES:
            raise ValueError(f"ball_shape must be one of {BALL_SHAPES}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.c_g != 0:
            raise ValueError("only flat geometries are supported (c_g must be 0)")
        exact = self.scale ** self.d * unit_ball_volume(self.d, self.ball_shape)
        if self.vK is not None and abs(float(self.vK) - exact) > 1e-12 * max(1.0, exact):
            raise ValueError(f"vK={self.vK} does not match the {self.ball_shape} ball ({exact})")
        object.__setattr__(self, "vK", exact)

    @property
    def L(self) -> float:
        return float(np.prod(self.sides))

    @property
    def torus(self) -> bool:
        return self.topology == "torus"

    @property
    def max_radius(self) -> float:
        """Largest time-radius ``s`` for which ``v_s(K) = s^d vK`` holds exactly."""
        if not self.torus:
            return math.inf
        return min(self.sides) / (2 * self.scale)

    def to_dict(self) -> dict:
        return {"d": self.d, "sides": list(self.sides), "topology": self.topology,
                "ball_shape": self.ball_shape, "scale": self.scale}

    @classmethod
    def from_dict(cls, cfg: dict) -> "ManifoldSpec":
        keys = ("d", "sides", "topology", "ball_shape", "scale", "vK")
        return cls(**{k: cfg[k] for k in keys if k in cfg})

    @classmethod
    def cube(cls, d: int, L: float, **kw) -> "ManifoldSpec":
        """Torus or square/cube of total volume ``L``."""
        return cls(d=d, sides=(L ** (1.0 / d),) * d, **kw)


def sample_uniform(spec: ManifoldSpec, rng: np.random.Generator, size=None) -> np.ndarray:
    if size is None:
        return rng.random(spec.d) * np.asarray(spec.sides)
    return rng.random((size, spec.d)) * np.asarray(spec.sides)


def wrap(spec: ManifoldSpec, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if spec.torus:
        p = np.mod(p, spec.sides)
        # mod can return the side length itself for tiny negative inputs
        p = np.where(p >= np.asarray(spec.sides), 0.0, p)
    return p


def displacement(spec: ManifoldSpec, p, q) -> np.ndarray:
    """Per-axis absolute differences, wrapped on the torus (broadcasts)."""
    diff = np.abs(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))
    if spec.torus:
        sides = np.asarray(spec.sides)
        diff = np.minimum(diff, sides - diff)
    return diff


def distance(spec: ManifoldSpec, p, q):
    diff = displacement(spec, p, q)
    if spec.ball_shape == "sup":
        out = np.max(diff, axis=-1)
    else:
        out = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def ball_volume(spec: ManifoldSpec, s: float) -> float:
    if s < 0:
        raise ValueError("radius must be nonnegative")
    if s > spec.max_radius:
        raise RadiusTooLarge(f"radius {s} exceeds torus cap {spec.max_radius}")
    return s ** spec.d * spec.vK


def _unit_directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_in_ball(spec: ManifoldSpec, center, s: float, rng: np.random.Generator,
                   size=None) -> np.ndarray:
    """Uniform point(s) in ``K(center, s)``; not rejected against a rectangle."""
    n = 1 if size is None else size
    R = spec.scale * s
    if spec.ball_shape == "sup":
        off = rng.uniform(-R, R, (n, spec.d))
    else:
        off = _unit_directions(rng, n, spec.d) * (R * rng.random((n, 1)) ** (1.0 / spec.d))
    out = wrap(spec, np.asarray(center, dtype=float) + off)
    return out[0] if size is None else out


def sample_on_sphere(spec: ManifoldSpec, center, s: float, rng: np.random.Generator,
                     size=None) -> np.ndarray:
    """Uniform point(s) on the boundary of ``K(center, s)`` w.r.t. surface measure."""
    n = 1 if size is None else size
    R = spec.scale * s
    d = spec.d
    if spec.ball_shape == "sup":
        # 2d faces of equal area: pick one, then a uniform point on it
        off = rng.uniform(-R, R, (n, d))
        axis = rng.integers(0, d, n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        off[np.arange(n), axis] = sign * R
    else:
        off = _unit_directions(rng, n, d) * R
    out = wrap(spec, np.asarray(center, dtype=float) + off)
    return out[0] if size is None else out


def inside(spec: ManifoldSpec, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if spec.torus:
        return np.ones(q.shape[:-1], dtype=bool) if q.ndim > 1 else True
    ok = np.all((q >= 0) & (q <= np.asarray(spec.sides)), axis=-1)
    return ok


@dataclass(frozen=True)
class Island:
    center: np.ndarray
    birth: float
    id: int

    def radius(self, t: float) -> float:
        return max(t - self.birth, 0.0)


def covers(spec: ManifoldSpec, island: Island, q, t: float) -> bool:
    if t < island.birth:
        raise ValueError("query time precedes island birth")
    return bool(distance(spec, island.center, q) <= spec.scale * (t - island.birth))


def boundary_fraction(spec: ManifoldSpec, delta: float) -> float:
    """Exact ``|C_delta| / L``: points whose ``K(., delta)`` meets the boundary."""
    if spec.torus:
        return 0.0
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    reach = spec.scale * delta
    interior = np.prod([max(a - 2 * reach, 0.0) for a in spec.sides])
    return float(1.0 - interior / spec.L)


def covering_number(spec: ManifoldSpec, s: float) -> int:
    """Number of balls ``K(., s)`` in a grid arrangement that covers C."""
    R = spec.scale * s
    # a cube of side 2R/sqrt(d) fits inside a round ball of radius R
    side = 2 * R if spec.ball_shape == "sup" else 2 * R / math.sqrt(spec.d)
    return int(np.prod([math.ceil(a / side - 1e-12) for a in spec.sides]))


def covering_constant(spec: ManifoldSpec, n_grid: int = 400) -> float:
    """Smallest ``c0`` with ``n(s) <= c0 L / (vK s^d)`` over a log grid of ``s``."""
    s_hi = spec.L ** (1.0 / spec.d)
    grid = s_hi * np.logspace(-4, 0, n_grid, endpoint=False)
    return max(covering_number(spec, s) * spec.vK * s ** spec.d / spec.L for s in grid)
