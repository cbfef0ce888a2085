"""Compiled inner loops shared by the branching and spatial simulators.

Kernels draw from numba's internal generator, which the Python wrappers
seed from the caller's ``numpy.random.Generator`` before each run.
"""
import math

import numpy as np
from numba import njit

NEWTON_RTOL = 1e-12

# spatial kernel return codes
DONE, EVENT_CAP, NEED_ISLANDS, NEED_LOG, NEED_POOL = 0, 1, 2, 3, 4

# event-log dispositions
REJECTED_OWNER, REJECTED_OUTSIDE, ACCEPTED_NEW_ISLAND, ACCEPTED_MARK_COVERED = 0, 1, 2, 3


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def poly_eval(a, x):
    """Value and derivative of ``sum_{k>=1} a[k] x^k``."""
    f = 0.0
    df = 0.0
    for k in range(a.shape[0] - 1, 0, -1):
        f = f * x + a[k]
        df = df * x + k * a[k]
    return f * x, df


@njit(cache=True)
def invert_poly(a, E):
    """Positive root of ``sum_{k>=1} a[k] x^k = E`` for nonnegative ``a``.

    The polynomial is increasing and convex on x >= 0, so Newton started at
    an upper bound decreases monotonically onto the root.
    """
    if E <= 0.0:
        return 0.0
    hi = math.inf
    nz = 0
    last = 0
    for k in range(1, a.shape[0]):
        if a[k] > 0.0:
            nz += 1
            last = k
            b = (E / a[k]) ** (1.0 / k)
            if b < hi:
                hi = b
    if nz == 0:
        return math.inf
    if nz == 1:
        return (E / a[last]) ** (1.0 / last)
    x = hi
    for _ in range(200):
        f, df = poly_eval(a, x)
        res = f - E
        if abs(res) <= NEWTON_RTOL * E or df <= 0.0:
            break
        step = res / df
        if step <= 0.0:
            # roundoff below the root; the residual is already at machine level
            break
        x -= step
    return x


@njit(cache=True)
def binom(n, k):
    out = 1.0
    for i in range(1, k + 1):
        out = out * (n - k + i) / i
    return out


@njit(cache=True)
def shift_moments(M, delta):
    """In place ``M_l <- sum_k C(l,k) delta^k M_{l-k}`` (real-time moments)."""
    for l in range(M.shape[0] - 1, 0, -1):
        acc = M[l]
        p = 1.0
        for k in range(1, l + 1):
            p *= delta
            acc += binom(l, k) * p * M[l - k]
        M[l] = acc


@njit(cache=True)
def shift_scaled(H, delta):
    """In place ``H_i <- sum_k H_{i-k} delta^k / k!`` (scaled moments)."""
    for i in range(H.shape[0] - 1, 0, -1):
        acc = H[i]
        p = 1.0
        for k in range(1, i + 1):
            p = p * delta / k
            acc += p * H[i - k]
        H[i] = acc


@njit(cache=True)
def _scaled_coeffs(H, a):
    r = H.shape[0] - 1
    p = 1.0
    for k in range(1, r + 1):
        p /= k
        a[k] = H[r - k] * p


@njit(cache=True)
def branch_run(r, u_stop, level, stop_at_level, max_events):
    """One branching run in scaled time from a single island at 0.

    Returns (births, jumps, u_end, H, hit, status). ``jumps[j]`` is H_r at
    the j-th birth, i.e. the position of that birth on the unit-rate clock;
    ``hit`` is the first time H_r reaches ``level`` (inf if not reached).
    """
    H = np.zeros(r + 1)
    H[0] = 1.0
    a = np.zeros(r + 1)
    births = np.empty(64)
    jumps = np.empty(64)
    births[0] = 0.0
    jumps[0] = 0.0
    n = 1
    u = 0.0
    hit = math.inf
    status = 0
    while True:
        E = np.random.exponential(1.0)
        _scaled_coeffs(H, a)
        if hit == math.inf and level > 0.0:
            need = level - H[r]
            if need <= 0.0:
                hit = u
            elif need <= E:
                cross = invert_poly(a, need)
                if u + cross <= u_stop:
                    hit = u + cross
            if hit < math.inf and stop_at_level:
                shift_scaled(H, hit - u)
                u = hit
                break
        delta = invert_poly(a, E)
        if u + delta >= u_stop:
            shift_scaled(H, u_stop - u)
            u = u_stop
            break
        shift_scaled(H, delta)
        u += delta
        H[0] += 1.0
        if n == births.shape[0]:
            grown = np.empty(2 * n)
            grown[:n] = births
            births = grown
            grown = np.empty(2 * n)
            grown[:n] = jumps
            jumps = grown
        births[n] = u
        jumps[n] = H[r]
        n += 1
        if n > max_events:
            status = 1
            break
    return births[:n].copy(), jumps[:n].copy(), u, H, hit, status


@njit(cache=True)
def sample_w_tilde(r, u_stop, n, max_events):
    """``n`` independent draws of exp(-u) * sum_{i<r} H_i at scaled time u_stop."""
    out = np.empty(n)
    H = np.zeros(r + 1)
    a = np.zeros(r + 1)
    for s in range(n):
        H[:] = 0.0
        H[0] = 1.0
        u = 0.0
        events = 0
        while True:
            _scaled_coeffs(H, a)
            delta = invert_poly(a, np.random.exponential(1.0))
            if u + delta >= u_stop:
                shift_scaled(H, u_stop - u)
                break
            shift_scaled(H, delta)
            u += delta
            H[0] += 1.0
            events += 1
            if events > max_events:
                out[s] = math.nan
                return out, 1
        acc = 0.0
        for i in range(r):
            acc += H[i]
        out[s] = math.exp(-u_stop) * acc
    return out, 0


# ---------------------------------------------------------------------------
# spatial process

@njit(cache=True)
def _dist2(P, Q, sides, torus, sup):
    acc = 0.0
    for k in range(P.shape[0]):
        diff = abs(P[k] - Q[k])
        if torus and diff > sides[k] - diff:
            diff = sides[k] - diff
        if sup:
            if diff > acc:
                acc = diff
        else:
            acc += diff * diff
    if sup:
        return acc * acc
    return acc


@njit(cache=True)
def _covered(Q, t, centers, births, upto, exclude, strict, sides, torus, sup, scale,
             use_index, cell_sizes, n_c, head, ent_isl, ent_next):
    """Is Q inside the ball of some island i < upto with i != exclude?"""
    if use_index:
        cell = 0
        for k in range(Q.shape[0]):
            c = int(Q[k] / cell_sizes[k])
            if c >= n_c:
                c = n_c - 1
            if c < 0:
                c = 0
            cell = cell * n_c + c
        e = head[cell]
        while e >= 0:
            i = ent_isl[e]
            e = ent_next[e]
            if i >= upto or i == exclude:
                continue
            R = scale * (t - births[i])
            if R < 0.0:
                continue
            d2 = _dist2(centers[i], Q, sides, torus, sup)
            if d2 < R * R or (not strict and d2 == R * R):
                return True
        return False
    for i in range(upto):
        if i == exclude:
            continue
        R = scale * (t - births[i])
        if R < 0.0:
            continue
        d2 = _dist2(centers[i], Q, sides, torus, sup)
        if d2 < R * R or (not strict and d2 == R * R):
            return True
    return False


@njit(cache=True)
def _axis_range(x, R, h, n_c, torus):
    lo = int(math.floor((x - R) / h))
    hi = int(math.floor((x + R) / h))
    if torus:
        if hi - lo + 1 >= n_c:
            return 0, n_c - 1, True
        return lo, hi, False
    if lo < 0:
        lo = 0
    if hi > n_c - 1:
        hi = n_c - 1
    return lo, hi, True


@njit(cache=True)
def _cells_needed(x, R, cell_sizes, n_c, torus):
    count = 1
    for k in range(x.shape[0]):
        lo, hi, _ = _axis_range(x[k], R, cell_sizes[k], n_c, torus)
        count *= hi - lo + 1
    return count


@njit(cache=True)
def _insert(i, x, R, cell_sizes, n_c, torus, head, ent_isl, ent_next, pool):
    """Insert island i into every cell meeting the bounding box of radius R.

    Returns the new pool size, or -1 if the pool is full.
    """
    d = x.shape[0]
    los = np.empty(d, np.int64)
    his = np.empty(d, np.int64)
    for k in range(d):
        lo, hi, _ = _axis_range(x[k], R, cell_sizes[k], n_c, torus)
        los[k] = lo
        his[k] = hi
    idx = los.copy()
    while True:
        cell = 0
        for k in range(d):
            c = idx[k] % n_c
            cell = cell * n_c + c
        if pool >= ent_isl.shape[0]:
            return -1
        ent_isl[pool] = i
        ent_next[pool] = head[cell]
        head[cell] = pool
        pool += 1
        k = d - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] <= his[k]:
                break
            idx[k] = los[k]
            k -= 1
        if k < 0:
            break
    return pool


@njit(cache=True)
def spatial_run(kind, sides, torus, sup, scale, c_rate,
                centers, births, prefix, M, counts, tstate,
                t_stop, max_events, index_threshold,
                cell_sizes, n_c, epoch_len, head, ent_isl, ent_next,
                record, log_t, log_src, log_loc, log_mark, log_disp):
    """Advance the thinned spread process up to ``t_stop``.

    counts = [n_islands, n_log, n_events, pool, index_on, n_accepted]
    tstate = [t, epoch_end, pending exponential or 0]
    ``kind`` 0 is gossip (rate per island ~ volume), 1 small-world (~ surface).
    Resumable: returns early, before any random draw, when a buffer is full.
    """
    d = sides.shape[0]
    r = M.shape[0] - 1
    e = d if kind == 0 else d - 1
    a = np.zeros(r + 1)
    Q = np.empty(d)
    P = np.empty(d)
    L = 1.0
    for k in range(d):
        L *= sides[k]
    while True:
        n = counts[0]
        t = tstate[0]
        use_index = counts[4] == 1
        # (re)build the cell index at epoch boundaries
        if n > index_threshold and (not use_index or t >= tstate[1]):
            t_e = tstate[1]
            if t_e <= t:
                t_e = t + epoch_len
            need = 0
            for i in range(n):
                need += _cells_needed(centers[i], scale * (t_e - births[i]), cell_sizes, n_c, torus)
            if need + need // 4 + 64 > ent_isl.shape[0]:
                counts[4] = 0
                return NEED_POOL
            head[:] = -1
            pool = 0
            for i in range(n):
                pool = _insert(i, centers[i], scale * (t_e - births[i]), cell_sizes, n_c,
                               torus, head, ent_isl, ent_next, pool)
            counts[3] = pool
            counts[4] = 1
            tstate[1] = t_e
            use_index = True
        if counts[2] >= max_events:
            return EVENT_CAP
        if n >= centers.shape[0]:
            return NEED_ISLANDS
        if record and counts[1] >= log_t.shape[0]:
            return NEED_LOG

        # an exponential left over from a previous stop is used up first,
        # so the realization does not depend on how the horizon is chunked
        if tstate[2] > 0.0:
            E = tstate[2]
            tstate[2] = 0.0
        else:
            E = np.random.exponential(1.0)
        for k in range(1, r + 1):
            a[k] = c_rate * binom(r, k) * M[r - k]
        delta = invert_poly(a, E)
        if t + delta >= t_stop:
            used, _ = poly_eval(a, t_stop - t)
            tstate[2] = max(E - used, 1e-300)
            shift_moments(M, t_stop - t)
            tstate[0] = t_stop
            return DONE
        shift_moments(M, delta)
        t += delta
        tstate[0] = t
        counts[2] += 1

        # source island, chosen with probability proportional to (t - tau_j)^e
        u = np.random.random()
        if e == 0:
            j = int(u * n)
            if j >= n:
                j = n - 1
        else:
            target = u * M[e]
            lo = 1
            hi = n
            while lo < hi:
                mid = (lo + hi) // 2
                w = 0.0
                tp = 1.0
                for l in range(e, -1, -1):
                    term = binom(e, l) * tp * prefix[mid, l]
                    if l % 2 == 1:
                        term = -term
                    w += term
                    tp *= t
                if w > target:
                    hi = mid
                else:
                    lo = mid + 1
            j = lo - 1

        R = scale * (t - births[j])
        if sup:
            for k in range(d):
                Q[k] = centers[j, k] + (2.0 * np.random.random() - 1.0) * R
            if kind == 1:
                ax = int(np.random.random() * d)
                if ax >= d:
                    ax = d - 1
                Q[ax] = centers[j, ax] + (R if np.random.random() < 0.5 else -R)
        else:
            norm = 0.0
            for k in range(d):
                Q[k] = np.random.standard_normal()
                norm += Q[k] * Q[k]
            norm = math.sqrt(norm)
            rad = R
            if kind == 0:
                rad = R * np.random.random() ** (1.0 / d)
            for k in range(d):
                Q[k] = centers[j, k] + Q[k] / norm * rad
        outside = False
        for k in range(d):
            if torus:
                Q[k] = Q[k] % sides[k]
                if Q[k] >= sides[k]:
                    Q[k] = 0.0
            elif Q[k] < 0.0 or Q[k] > sides[k]:
                outside = True

        disp = REJECTED_OUTSIDE
        if not outside:
            if kind == 0:
                # canonical owner: the earliest-born island covering Q
                taken = _covered(Q, t, centers, births, j, -1, False, sides, torus, sup, scale,
                                 use_index, cell_sizes, n_c, head, ent_isl, ent_next)
            else:
                # Q must lie on the boundary of the union
                taken = _covered(Q, t, centers, births, n, j, True, sides, torus, sup, scale,
                                 use_index, cell_sizes, n_c, head, ent_isl, ent_next)
            if taken:
                disp = REJECTED_OWNER
            else:
                counts[5] += 1
                for k in range(d):
                    P[k] = np.random.random() * sides[k]
                if _covered(P, t, centers, births, n, -1, False, sides, torus, sup, scale,
                            use_index, cell_sizes, n_c, head, ent_isl, ent_next):
                    disp = ACCEPTED_MARK_COVERED
                else:
                    disp = ACCEPTED_NEW_ISLAND
                    centers[n, :] = P
                    births[n] = t
                    for l in range(prefix.shape[1]):
                        prefix[n + 1, l] = prefix[n, l] + t ** l
                    M[0] += 1.0
                    counts[0] = n + 1
                    if use_index:
                        pool = _insert(n, P, scale * (tstate[1] - t), cell_sizes, n_c, torus,
                                       head, ent_isl, ent_next, counts[3])
                        if pool < 0:
                            # pool exhausted: scan naively until the next rebuild
                            counts[4] = 0
                            tstate[1] = t
                        else:
                            counts[3] = pool
        if record:
            m = counts[1]
            log_t[m] = t
            log_src[m] = j
            log_disp[m] = disp
            for k in range(d):
                log_loc[m, k] = Q[k]
                if disp >= ACCEPTED_NEW_ISLAND:
                    log_mark[m, k] = P[k]
                else:
                    log_mark[m, k] = math.nan
            counts[1] = m + 1


@njit(cache=True)
def probe_first_cover(centers, births, probes, sides, torus, sup, scale):
    """min_i (birth_i + dist(center_i, probe) / scale), islands in birth order."""
    m = probes.shape[0]
    out = np.empty(m)
    for p in range(m):
        best = math.inf
        for i in range(births.shape[0]):
            if births[i] >= best:
                break
            tc = births[i] + math.sqrt(_dist2(centers[i], probes[p], sides, torus, sup)) / scale
            if tc < best:
                best = tc
        out[p] = best
    return out
