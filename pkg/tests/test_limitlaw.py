import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gossipsim.branching import sample_W_r
from gossipsim.limitlaw import (GridSpec, LawConstants, SolverDidNotConverge, eval_h, fixed_point_residual,
                                gumbel_h_mc, phi, solve_h, w_tail_bounds)

ORACLE = json.loads((Path(__file__).parent / "data" / "oracle_h.json").read_text())
LAWS = {m: solve_h(m) for m in range(4)}


def test_logistic_anchor():
    law = LAWS[0]
    assert np.max(np.abs(law.h_values - 1 / (1 + np.exp(-law.grid)))) <= 1e-6
    assert eval_h(law, 0.0) == pytest.approx(0.5, abs=1e-6)
    assert phi(law, 1.0) == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("m", range(4))
def test_matches_independent_ode_oracle(m):
    for x, v in ORACLE[str(m)].items():
        assert eval_h(LAWS[m], float(x)) == pytest.approx(v, abs=1e-6)


@pytest.mark.parametrize("m", range(4))
def test_shape_and_asymptotes(m):
    law = LAWS[m]
    h = law.h_values
    assert np.all(np.diff(h) >= 0) and h.min() >= 0 and h.max() <= 1
    assert h[-1] >= 1 - 1e-3
    i1 = int(round(1 / (law.grid[1] - law.grid[0])))
    assert abs(h[i1] / h[0] - math.e) <= 1e-3
    assert fixed_point_residual(law) <= 10 * law.tol


def test_eval_h_limits_and_monotone(rng):
    law = LAWS[2]
    assert eval_h(law, -200.0) == pytest.approx(0.0, abs=1e-80)
    assert eval_h(law, 200.0) == 1.0
    x = np.sort(rng.uniform(-30, 20, (1000, 2)), axis=1)
    assert np.all(eval_h(law, x[:, 0]) <= eval_h(law, x[:, 1]))


def test_eval_h_continuous_at_grid_edges():
    law = LAWS[1]
    eps = 1e-9
    assert eval_h(law, law.s_min - eps) == pytest.approx(eval_h(law, law.s_min), rel=1e-6)
    assert eval_h(law, law.s_max + eps) == pytest.approx(eval_h(law, law.s_max), abs=1e-9)


def test_phi_examples():
    law = LAWS[1]
    assert phi(law, 0.0) == 1.0
    th = math.exp(law.s_min)
    assert (1 - phi(law, th)) / th == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        phi(law, -1.0)


def test_solver_preconditions_and_failure():
    with pytest.raises(ValueError):
        solve_h(1, GridSpec(-5.0, 12.0, 0.005))
    with pytest.raises(ValueError):
        solve_h(1, GridSpec(-16.0, 12.0, 0.05))
    with pytest.raises(SolverDidNotConverge):
        solve_h(1, max_iter=2)


def test_translation_is_pinned():
    """Starting from a shifted guess still lands on the slope-one solution."""
    law = LAWS[1]
    from gossipsim.limitlaw import _integral
    h = np.interp(law.grid + 0.3, law.grid, law.h_values)
    for _ in range(200):
        h = -np.expm1(-_integral(h, law.grid, 1))
    assert np.max(np.abs(h - law.h_values)) < 1e-6


def test_law_constants():
    assert LawConstants(1).C_d == Fraction(1, 2)
    assert LawConstants(2).C_d == Fraction(2, 3)
    assert LawConstants(2).Ctilde_d == 1
    for d in range(1, 13):
        c = LawConstants(d)
        assert c.C_d == Fraction(math.factorial(d), d + 1)
        assert Fraction(math.factorial(d) * ((d + 1) - 1), d * d) == c.Ctilde_d
        assert c.Ctilde_d == math.factorial(d - 1)


def test_gumbel_logistic(rng):
    e = gumbel_h_mc(0, 20_000, rng)
    assert e.sup_distance(lambda x: 1 / (1 + np.exp(-x))) <= 1.63 / math.sqrt(20_000)
    assert np.all(np.diff(e(np.linspace(-5, 5, 50))) >= 0)
    with pytest.raises(ValueError):
        gumbel_h_mc(1, 10, rng)


def test_tail_bounds(rng):
    law = LAWS[1]
    w = sample_W_r(2, rng, n=100_000)
    for level in (0.05, 0.1):
        b = w_tail_bounds(law, level)
        q = np.mean(w <= level)
        assert q <= b["lower_tail_bound"] + 3 * math.sqrt(max(q * (1 - q), 1e-12) / len(w))
    q = np.mean(w >= 10)
    assert q <= w_tail_bounds(law, 10)["upper_tail_bound"] + 3 * math.sqrt(q * (1 - q) / len(w))
    assert w_tail_bounds(law, 0.5)["c"] > 0


@pytest.mark.parametrize("r,m", [(2, 1), (3, 2)])
def test_laplace_transform_cross_check(r, m, rng):
    w = sample_W_r(r, rng, n=10_000)
    for th in (0.25, 1.0, 4.0):
        v = np.exp(-th * w)
        assert abs(v.mean() - phi(LAWS[m], th)) <= 3 * v.std() / 100


@given(st.floats(-40, 40), st.floats(0, 5))
def test_eval_h_monotone_property(x, dx):
    assert eval_h(LAWS[1], x) <= eval_h(LAWS[1], x + dx) + 1e-15
