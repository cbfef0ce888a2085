import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from gossipsim import _kernels as kern
from gossipsim.branching import (EventCapExceeded, MomentState, ProcessParams, H_vector, W_statistics,
                                 advance, clock_deviation, cumulative_intensity, diagnostics_at,
                                 growth_constants, hitting_time_tauK, K_of_Lambda, next_event_delay,
                                 sample_W, simulate_to, step)
from gossipsim.geometry import ManifoldSpec

LINE = ManifoldSpec(1, (1000.0,))
PLANE = ManifoldSpec(2, (100.0, 100.0))


def gossip(spec=LINE, rho=0.3):
    return ProcessParams("gossip", rho, spec)


def test_derived_parameters():
    p = gossip(PLANE, 0.2)
    assert p.r == 3
    assert p.lambda0 == pytest.approx((2 * 0.2 * math.pi) ** (1 / 3), rel=1e-12)
    assert p.Lambda == pytest.approx(PLANE.L * p.lambda0 ** 2 / math.pi, rel=1e-12)
    sw = ProcessParams("small-world", 0.2, PLANE)
    assert sw.r == 2 and sw.lambda0 == pytest.approx(math.sqrt(2 * 0.2 * math.pi))
    back = ProcessParams.from_lambda0("gossip", p.lambda0, PLANE)
    assert back.lambda0 == pytest.approx(p.lambda0, rel=1e-12)
    assert back.rho == pytest.approx(0.2, rel=1e-12)


def test_cumulative_intensity_examples():
    p = gossip()
    s = MomentState.initial(p)
    assert cumulative_intensity(p, s, 0.0) == 0.0
    assert cumulative_intensity(p, s, 2.0) == pytest.approx(p.rho * 2 * 4 / 2)
    sw = ProcessParams("small-world", 0.3, LINE)
    s = MomentState(r=1, births=[0.0, 0.5, 1.0], t=1.0)
    assert cumulative_intensity(sw, s, 0.7) == pytest.approx(0.3 * 2 * 3 * 0.7)


def test_next_event_delay_closed_forms(rng):
    p = gossip()
    s = MomentState.initial(p)
    E = 1.7
    assert next_event_delay(p, s, rng, E=E) == pytest.approx(math.sqrt(2 * E / (p.rho * 2)), rel=1e-12)
    sw = ProcessParams("small-world", 0.3, LINE)
    s = MomentState(r=1, births=[0.0, 0.2, 0.4, 0.9], t=1.0)
    assert next_event_delay(sw, s, rng, E=E) == pytest.approx(E / (0.3 * 2 * 4), rel=1e-12)


def test_delay_residual_tolerance(rng):
    p = gossip(PLANE, 0.05)
    s = MomentState(r=3, births=[0.0, 0.3, 1.1, 2.0], t=2.5)
    for E in rng.exponential(size=200):
        D = next_event_delay(p, s, rng, E=E)
        assert abs(cumulative_intensity(p, s, D) - E) <= 1e-12 * E * 10


def test_time_change_ks(rng):
    p = gossip(PLANE, 0.05)
    s = MomentState(r=3, births=[0.0, 0.3, 1.1], t=1.5)
    D = [next_event_delay(p, s, rng) for _ in range(10_000)]
    assert stats.kstest([cumulative_intensity(p, s, x) for x in D], "expon").pvalue > 0.01


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 1e3)), min_size=2, max_size=4),
       st.one_of(st.just(0.0), st.floats(1e-12, 10)))
def test_invert_poly_roundtrip(coeffs, E):
    a = np.array([0.0] + coeffs)
    if not np.any(a > 0):
        return
    x = kern.invert_poly(a, E)
    f, _ = kern.poly_eval(a, x)
    assert x >= 0
    assert abs(f - E) <= 1e-9 * max(E, 1e-300) + 1e-300


def test_step_and_moment_consistency(rng):
    p = gossip(PLANE, 0.05)
    s = MomentState.initial(p)
    for k in range(1, 300):
        step(p, s, rng)
        assert s.M[0] == 1 + k
        if k % 50 == 0:
            np.testing.assert_allclose(s.M, s.recompute(), rtol=1e-9)
    assert np.all(np.diff(s.births) > 0)
    advance(s, 0.37)
    np.testing.assert_allclose(s.M, s.recompute(), rtol=1e-9)


def test_H_and_W_at_start_and_single_island():
    p = gossip(PLANE, 0.05)
    s = MomentState.initial(p)
    H, hhat = H_vector(p, s)
    assert list(H) == [1, 0, 0, 0] and hhat == 1
    assert W_statistics(p, s)["W_tilde"] == 1
    advance(s, 2.0)
    H, _ = H_vector(p, s)
    u = p.lambda0 * 2.0
    np.testing.assert_allclose(H, [u ** i / math.factorial(i) for i in range(4)], rtol=1e-12)


def test_holder_bound_on_trajectories(rng):
    p = gossip(PLANE, 0.05)
    r = p.r
    for _ in range(20):
        tr = simulate_to(p, 6 / p.lambda0, rng)
        for t in np.linspace(0.1, tr.T, 7):
            H = tr.H(t)
            for i in range(1, r):
                bound = math.factorial(r) ** (i / r) / math.factorial(i) * H[r] ** (i / r) * H[0] ** (1 - i / r)
                assert H[i] <= bound * (1 + 1e-9)


def test_trajectory_moments_match_recompute(rng, tmp_path):
    p = gossip(PLANE, 0.05)
    tr = simulate_to(p, 5 / p.lambda0, rng)
    rows = tr.checkpoints([0.0, 1.0, tr.T])
    assert rows[0]["W_tilde"] == 1.0
    tr.to_csv(tmp_path / "traj.csv", [0.0, tr.T])
    header = (tmp_path / "traj.csv").read_text().splitlines()[0]
    assert header == "t,M_0,M_1,M_2,M_3,H_0,H_1,H_2,H_3,W_tilde"


@pytest.mark.parametrize("t", [1.0, 2.0, 4.0])
def test_martingale_mean(t, rng):
    p = gossip(PLANE, 0.05)
    w = sample_W(p, rng, B=math.exp(t), n=10_000)
    assert abs(w.mean() - 1) <= 3 * w.std() / 100


def test_W_components_converge_together(rng):
    p = gossip(LINE, 0.5)
    spread = []
    for _ in range(100):
        tr = simulate_to(p, 10 / p.lambda0, rng)
        v = tr.W(tr.T)["W_vec"]
        spread.append(v.max() - v.min())
    assert np.mean(spread) < 0.05


def test_W_mean_and_markov_tail(rng):
    p = gossip(LINE, 0.5)
    w = sample_W(p, rng, n=10_000)
    assert abs(w.mean() - 1) <= 3 * w.std() / 100
    for level in (2, 5, 10):
        q = np.mean(w >= level)
        assert q <= 1 / level + 3 * math.sqrt(q * (1 - q) / len(w)) + 1e-12


def test_lambda0_invariance(rng):
    """Different rho, same r: W read off real-time trajectories has the same law."""
    B = 50.0
    out = []
    for rho in (0.05, 3.0):
        p = gossip(PLANE, rho)
        T = math.log(B) / p.lambda0
        out.append([simulate_to(p, T, rng).W(T)["W_tilde"] for _ in range(2000)])
    assert stats.ks_2samp(*out).pvalue > 0.01


def test_martingale_increments(rng):
    p = gossip(LINE, 0.5)
    inc = []
    for _ in range(2000):
        tr = simulate_to(p, 3.0 / p.lambda0, rng)
        inc.append(tr.W(tr.T)["W_tilde"] - tr.W(1.5 / p.lambda0)["W_tilde"])
    inc = np.array(inc)
    assert abs(inc.mean()) <= 3 * inc.std() / math.sqrt(len(inc))


def test_expectation_bound(rng):
    p = gossip(PLANE, 0.05)
    trs = [simulate_to(p, 6 / p.lambda0, rng) for _ in range(500)]
    for u in (1.0, 3.0, 6.0):
        t = u / p.lambda0
        v = np.array([math.exp(-u) * np.max(tr.H(t)) for tr in trs])
        assert v.mean() <= 1 + 3 * v.std() / math.sqrt(len(v))


def test_event_cap(rng):
    with pytest.raises(EventCapExceeded):
        simulate_to(gossip(), 30.0, rng, max_events=100)
    with pytest.raises(EventCapExceeded):
        sample_W(gossip(), rng, B=1e6, n=2, max_events=100)


def test_hitting_time_examples(rng):
    p = gossip(PLANE, 0.05)
    r = p.r
    for _ in range(200):
        assert hitting_time_tauK(p, 1.0, rng) <= math.factorial(r) ** (1 / r) / p.lambda0 + 1e-12
    with pytest.raises(ValueError):
        hitting_time_tauK(p, 0.5, rng)


def test_hitting_time_level_is_reached(rng):
    p = gossip(PLANE, 0.05)
    tr = simulate_to(p, 8 / p.lambda0, rng, level=20.0)
    assert tr.H(tr.hit_time)[-1] == pytest.approx(20.0, rel=1e-9)
    assert tr.H(tr.hit_time * (1 - 1e-6))[-1] < 20.0


def test_hitting_time_coupled_in_rho():
    taus = []
    for rho in (0.05, 0.1, 0.5):
        taus.append(hitting_time_tauK(gossip(PLANE, rho), 8.0, np.random.default_rng(99)))
    assert taus[0] >= taus[1] >= taus[2]


def test_growth_constants():
    c = growth_constants(3, 8.0)
    assert c["eps_K"] == pytest.approx(2.5)
    assert c["C_a"] == pytest.approx(3 * math.exp(6 ** (1 / 3)))
    assert c["theta"] == pytest.approx(c["C_a"] * math.exp(1 / 80))
    assert c["c_c"] == pytest.approx(2 * 6 ** (1 / 3) / math.log(1.2))
    assert growth_constants(7, 8.0)["beta_r"] == pytest.approx(1 - math.cos(2 * math.pi / 7))
    assert K_of_Lambda(math.e) == pytest.approx(64000)


def test_diagnostics_examples(rng):
    p = gossip(PLANE, 0.05)
    tr = simulate_to(p, 6 / p.lambda0, rng)
    assert not diagnostics_at(p, tr, 0.0, 1.0).A2
    prev = False
    for K in (1, 2, 5, 10, 100, 1e4):
        a1 = diagnostics_at(p, tr, tr.T, K).A1
        assert a1 or not prev
        prev = a1


def _brute_clock(jumps, u_end, eta):
    grid = np.concatenate([np.linspace(0, u_end, 20001), jumps, np.nextafter(jumps, -np.inf)])
    grid = grid[(grid >= 0) & (grid <= u_end)]
    Z = np.searchsorted(np.sort(jumps), grid, side="right")
    return np.max(np.maximum(grid, 1) ** (-(1 + eta) / 2) * np.abs(Z - grid))


@given(st.lists(st.floats(0.0, 30.0), max_size=25), st.floats(0.0, 30.0), st.floats(0.0, 0.9))
def test_clock_deviation_matches_dense_scan(jumps, u_end, eta):
    jumps = np.sort(np.array(jumps))
    exact = clock_deviation(jumps, u_end, eta)
    assert exact >= _brute_clock(jumps[jumps <= u_end], u_end, eta) - 1e-12
    assert exact <= _brute_clock(jumps[jumps <= u_end], u_end, eta) + 2e-3


def test_growth_envelope(rng):
    p = gossip(PLANE, 0.05)
    K = 30.0
    fails = held = 0
    for _ in range(300):
        tr = simulate_to(p, 9 / p.lambda0, rng)
        s = 6 / p.lambda0
        dg = diagnostics_at(p, tr, s, K)
        # at K = 30 the clock event is vacuous-to-impossible (eps_K > 1), so condition on growth only
        if not (dg.A1 and dg.A2):
            continue
        held += 1
        Hs = np.max(tr.H(s))
        for t in np.linspace(s, tr.T, 6)[1:]:
            if math.exp(-p.lambda0 * (t - s) * (1 + dg.eps_K)) * np.max(tr.H(t)) > Hs:
                fails += 1
                break
    assert held > 0 and fails / held < 0.05


@pytest.mark.xfail(strict=True, reason="H_r(s) is O(Lambda^{alpha/2} log-ish) at s_Lambda, far below "
                                       "K(Lambda) = (40 log Lambda)^3; see notes")
def test_good_event_probability_at_preset_level(rng):
    p = ProcessParams.from_lambda0("gossip", 1.0, ManifoldSpec.cube(1, 2e4))
    s = 0.2 * math.log(1e4)
    K = K_of_Lambda(1e4)
    held = [diagnostics_at(p, simulate_to(p, s, rng), s, K).A for _ in range(200)]
    assert np.mean(held) >= 0.95
