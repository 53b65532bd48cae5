"""Compiled inner loops: driver accelerations, batched rollouts, zone events.

Everything here works on plain arrays indexed by vehicle slot. Route numbers
index into NetTables. The Python modules wrap these with typed interfaces.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# layout of the packed driver parameter vector
P_V0, P_T, P_AMAX, P_BCOMF, P_S0, P_DELTA, P_BEM, P_ALAT, P_TAU, P_LOOK, P_CLEAR = range(11)

SLOW_V = 0.3  # m/s, vehicles below this take part in deadlock resolution
STOP_MARGIN = 0.25  # m, kinematic yield targets this far before the line
MIN_GAP = 0.01  # m
YIELD_GAP, YIELD_FORCED = 1, 2


@njit(cache=True, inline="always")
def lane_index(t, r, s):
    k = 0
    for q in range(1, t.route_nlanes[r]):
        if s >= t.route_lstart[r, q]:
            k = q
        else:
            break
    return k


@njit(cache=True, inline="always")
def grid_index(t, r, s):
    g = int(s / t.grid_ds) if s > 0.0 else 0
    return min(g, t.route_ng[r] - 1)


@njit(cache=True, inline="always")
def speed_limit(t, r, s):
    return t.vlim[r, grid_index(t, r, s)]


@njit(cache=True, inline="always")
def map_onto(t, r_obs, r_other, s_other):
    """Arc position of a point of another route on the observer's route (nan if off-route)."""
    k = lane_index(t, r_other, s_other)
    off = t.lane_off[r_obs, t.route_lane[r_other, k]]
    if math.isnan(off):
        return np.nan
    return off + (s_other - t.route_lstart[r_other, k])


@njit(cache=True, inline="always")
def _onto(t, r_obs, r_other, k, s_other):
    off = t.lane_off[r_obs, t.route_lane[r_other, k]]
    if math.isnan(off):
        return np.nan
    return off + (s_other - t.route_lstart[r_other, k])


@njit(cache=True, inline="always")
def gap_accept(d_targ, v, d_stop_other, v_other, tau_gap, a_max):
    if math.isinf(d_stop_other):
        return True
    eta_other = d_stop_other / max(v_other, 0.1)
    # a slow vehicle clears no later than when starting from rest at a_max
    eta_self = d_targ / max(v, 0.5, math.sqrt(0.5 * a_max * max(d_targ, 0.0)))
    return eta_other > eta_self + tau_gap


@njit(cache=True, inline="always")
def idm(v, v_des, gap, dv, p):
    """IDM acceleration; ``gap`` = inf means free road, ``v_des`` = inf drops the free term."""
    free = 0.0
    if not math.isinf(v_des):
        r = v / v_des
        free = r * r * r * r if p[P_DELTA] == 4.0 else r ** p[P_DELTA]
    if math.isinf(gap):
        return p[P_AMAX] * (1.0 - free)
    s_star = p[P_S0] + max(0.0, v * p[P_T] + v * dv / (2.0 * math.sqrt(p[P_AMAX] * p[P_BCOMF])))
    q = s_star / max(gap, MIN_GAP)
    return p[P_AMAX] * (1.0 - free - q * q)


@njit(cache=True, inline="always")
def desired_speed(v_max, delta_psi, p):
    kappa = max(delta_psi / p[P_LOOK], 1e-9)
    return min(p[P_V0] * v_max, math.sqrt(p[P_ALAT] / kappa))


@njit(cache=True, inline="always")
def yield_floor(v, d, p):
    """Deceleration needed to stop ``STOP_MARGIN`` before a line ``d`` ahead (0 if comfortable)."""
    room = d - STOP_MARGIN
    if room <= 0.0:
        return -p[P_BEM] if v > 0.0 else 0.0
    need = v * v / (2.0 * room)
    return -need if need > p[P_BCOMF] else 0.0


@njit(cache=True, inline="always")
def required_accel(v, D, T, vcap, p):
    """Constant acceleration covering ``D`` within ``T`` under speed cap ``vcap``."""
    if D <= 0.0:
        return -np.inf
    if T <= 1e-9:  # due now; also keeps T * T from underflowing
        return p[P_AMAX]
    a = 2.0 * (D - v * T) / (T * T)
    if v >= vcap:
        return min(a, 0.0) if D <= v * T else p[P_AMAX]
    if v + a * T <= vcap:
        return a
    room = vcap * T - D
    if room <= 0.0:
        return p[P_AMAX]
    return (vcap - v) ** 2 / (2.0 * room)


@njit(cache=True)
def compute_accels(t, s, v, route, length, known, ovr, nc, hold_s, treq_T, treq_s, treq_vcap, p):
    """One driver-model evaluation for every vehicle.

    Vehicles with ``known`` set (CAVs) are judged on their own route. For the
    others every route continuing from their current lane is considered.
    ovr[i, j] = +1 lets i proceed ahead of j, -1 makes i yield to j. nc[i, j]
    drops i's gap-based yields toward j; occupancy yields still apply. Vehicles
    with a finite ``hold_s`` treat that arc position as a stop line; those with
    a finite ``treq_T`` track arrival of their rear at ``treq_s``.
    """
    n = s.shape[0]
    lane_k, rear_k, lead, lead_gap, ycode, ydist, acc = workspace(n)
    _accels_into(t, s, v, route, length, known, ovr, nc, hold_s, treq_T, treq_s, treq_vcap, p,
                 lane_k, rear_k, lead, lead_gap, ycode, ydist, acc)
    return acc


@njit(cache=True)
def workspace(n):
    """Scratch arrays for ``_accels_into``; the last one receives the accelerations."""
    return (np.empty(n, np.int64), np.empty(n, np.int64), np.empty(n, np.int64), np.empty(n),
            np.empty((n, n), np.int64), np.empty((n, n)), np.empty(n))


@njit(cache=True, inline="always")
def _accels_into(t, s, v, route, length, known, ovr, nc, hold_s, treq_T, treq_s, treq_vcap, p,
                 lane_k, rear_k, lead, lead_gap, ycode, ydist, acc):
    n = s.shape[0]
    for j in range(n):
        lane_k[j] = lane_index(t, route[j], s[j])
        rear_k[j] = lane_index(t, route[j], s[j] - length[j])
    lead[:] = -1
    lead_gap[:] = np.inf
    ycode[:, :] = 0
    ydist[:, :] = np.inf

    for i in range(n):
        ri = route[i]
        # past every stop line: only car following is left
        zones_left = t.rz_n[ri] > 0 and s[i] <= t.rz_stop[ri, t.rz_n[ri] - 1]
        # gap yields stop at the next stop line, not inside the junction
        next_stop = np.inf
        for k in range(t.rz_n[ri]):
            if s[i] <= t.rz_stop[ri, k] < next_stop:
                next_stop = t.rz_stop[ri, k]
        for j in range(n):
            if j == i:
                continue
            rj = route[j]
            # car following
            if t.share[ri, rj]:
                front = _onto(t, ri, rj, lane_k[j], s[j])
                if not math.isnan(front):
                    rear = front - length[j]
                else:
                    rear = _onto(t, ri, rj, rear_k[j], s[j] - length[j])
                    front = rear + length[j]
                if not math.isnan(rear) and (front > s[i] or (front == s[i] and j < i)):
                    gap = rear - s[i]
                    if gap < lead_gap[i]:
                        lead_gap[i] = gap
                        lead[i] = j
            if not zones_left:
                continue
            # conflict zones
            o = ovr[i, j]
            single = o != 0 or known[j]
            n_alt = 1 if single else t.alt_n[rj, lane_k[j]]
            for q in range(n_alt):
                re = rj if single else t.alt[rj, lane_k[j], q]
                if t.pz_n[ri, re] == 0 or s[j] - length[j] >= t.exit_pt[re] + v[j] * p[P_CLEAR]:
                    continue
                for m in range(t.pz_n[ri, re]):
                    ka = t.pz_ka[ri, re, m]
                    kb = t.pz_kb[ri, re, m]
                    stop_i = t.rz_stop[ri, ka]
                    targ_i = t.rz_targ[ri, ka]
                    if s[i] - length[i] >= targ_i or s[i] > stop_i:
                        continue
                    stop_j = t.rz_stop[re, kb]
                    # j counts as occupying until it is about tau_clear past the zone
                    if s[j] - length[j] >= t.rz_targ[re, kb] + v[j] * p[P_CLEAR]:
                        continue
                    d_i = stop_i - s[i]
                    code = 0
                    if s[j] > stop_j:
                        code = YIELD_FORCED
                    elif o == -1:
                        code = YIELD_FORCED
                    elif o == 0 and not nc[i, j] and t.pz_win[ri, re, m] != 1:
                        if not gap_accept(targ_i - s[i], v[i], stop_j - s[j], v[j], p[P_TAU], p[P_AMAX]):
                            # a vehicle that can no longer stop keeps going
                            if v[i] * v[i] / (2.0 * p[P_BEM]) <= d_i:
                                code = YIELD_GAP
                    if code == YIELD_GAP:
                        d_i = next_stop - s[i]
                    if code > ycode[i, j]:
                        ycode[i, j] = code
                    if code > 0 and d_i < ydist[i, j]:
                        ydist[i, j] = d_i

    _break_deadlocks(v, lead, lead_gap, ycode)

    for i in range(n):
        ri = route[i]
        g = grid_index(t, ri, s[i])
        v_des = desired_speed(t.vlim[ri, g], t.dpsi[ri, g], p)
        a_free = idm(v[i], v_des, np.inf, 0.0, p)
        a_int = np.inf
        if lead[i] >= 0:
            dv = v[i] - v[lead[i]]
            a_free = min(a_free, idm(v[i], v_des, lead_gap[i], dv, p))
            a_int = min(a_int, idm(v[i], np.inf, lead_gap[i], dv, p))
        d_y = np.inf
        for j in range(n):
            if ycode[i, j] > 0 and ydist[i, j] < d_y:
                d_y = ydist[i, j]
        if s[i] <= hold_s[i]:
            d_y = min(d_y, hold_s[i] - s[i])
        if not math.isinf(d_y):
            floor = yield_floor(v[i], d_y, p)
            a_free = min(a_free, idm(v[i], v_des, d_y, v[i], p))
            a_int = min(a_int, idm(v[i], np.inf, d_y, v[i], p))
            if floor < 0.0:
                a_free = min(a_free, floor)
                a_int = min(a_int, floor)
        a = a_free
        if not math.isinf(treq_T[i]):
            a_req = required_accel(v[i], treq_s[i] + length[i] - s[i], treq_T[i], treq_vcap[i], p)
            if v[i] >= t.vlim[ri, g]:
                a_req = min(a_req, 0.0)
            a = max(a, min(a_req, a_int, p[P_AMAX]))
        acc[i] = min(max(a, -p[P_BEM]), p[P_AMAX])


@njit(cache=True)
def _break_deadlocks(v, lead, lead_gap, ycode):
    """Release waiting cycles among (nearly) standing vehicles.

    In each strongly connected component of the waits-for graph, the member
    with the smallest slot that has a droppable yield inside the component
    gives up those yields.
    """
    n = v.shape[0]
    edges = 0
    for i in range(n):
        if v[i] >= SLOW_V:
            continue
        for j in range(n):
            if j != i and v[j] < SLOW_V and (ycode[i, j] > 0 or lead[i] == j):
                edges += 1
    if edges < 2:
        return
    adj = np.zeros((n, n), np.bool_)
    for i in range(n):
        if v[i] >= SLOW_V:
            continue
        for j in range(n):
            if j != i and v[j] < SLOW_V and (ycode[i, j] > 0 or lead[i] == j):
                adj[i, j] = True
    for k in range(n):
        for i in range(n):
            if adj[i, k]:
                for j in range(n):
                    if adj[k, j]:
                        adj[i, j] = True
    done = np.zeros(n, np.bool_)
    for i in range(n):
        if done[i] or not adj[i, i]:
            continue
        members = np.zeros(n, np.bool_)
        for j in range(n):
            if j == i or (adj[i, j] and adj[j, i]):
                members[j] = True
                done[j] = True
        for m in range(n):
            if not members[m]:
                continue
            dropped = False
            for j in range(n):
                if members[j] and ycode[m, j] == YIELD_GAP:
                    ycode[m, j] = 0
                    dropped = True
            if dropped:
                break


@njit(cache=True)
def advance(s, v, a, dt):
    for i in range(s.shape[0]):
        v[i] = max(0.0, v[i] + a[i] * dt)
        s[i] = s[i] + v[i] * dt


@njit(cache=True)
def rollout_batch(t, s0, v0, route, length, known, ovr_commit, ovr_cand, nc, p, dt, n_steps, n_commit):
    """Closed-loop rollouts, one per candidate override matrix.

    The committed prefix is shared by all candidates and simulated once.
    Returns positions and speeds with shape (B, n_steps + 1, N).
    """
    n_b = ovr_cand.shape[0]
    n = s0.shape[0]
    n_pre = min(n_commit, n_steps)
    S = np.empty((n_b, n_steps + 1, n))
    V = np.empty((n_b, n_steps + 1, n))
    none = np.full(n, np.inf)
    lane_k, rear_k, lead, lead_gap, ycode, ydist, a = workspace(n)
    s = s0.copy()
    v = v0.copy()
    pre_s = np.empty((n_pre + 1, n))
    pre_v = np.empty((n_pre + 1, n))
    pre_s[0] = s
    pre_v[0] = v
    for h in range(n_pre):
        _accels_into(t, s, v, route, length, known, ovr_commit, nc, none, none, none, none, p,
                     lane_k, rear_k, lead, lead_gap, ycode, ydist, a)
        advance(s, v, a, dt)
        pre_s[h + 1] = s
        pre_v[h + 1] = v
    for b in range(n_b):
        S[b, : n_pre + 1] = pre_s
        V[b, : n_pre + 1] = pre_v
        s = pre_s[n_pre].copy()
        v = pre_v[n_pre].copy()
        for h in range(n_pre, n_steps):
            _accels_into(t, s, v, route, length, known, ovr_cand[b], nc, none, none, none, none, p,
                         lane_k, rear_k, lead, lead_gap, ycode, ydist, a)
            advance(s, v, a, dt)
            S[b, h + 1] = s
            V[b, h + 1] = v
    return S, V


@njit(cache=True, inline="always")
def _first_index(x, line, strict):
    """First sample index with x above (``strict``) or at/above ``line``; len(x) if none."""
    for h in range(x.shape[0]):
        if x[h] > line or (not strict and x[h] >= line):
            return h
    return x.shape[0]


@njit(cache=True, inline="always")
def _crossing(x, line, dt):
    """Interpolated time at which the series ``x`` first exceeds ``line`` (inf if never)."""
    h = _first_index(x, line, True)
    if h == 0 or h == x.shape[0]:
        return np.inf if h else 0.0
    step = x[h] - x[h - 1]
    frac = (line - x[h - 1]) / step if step > 0.0 else 1.0
    return (h - 1 + frac) * dt


@njit(cache=True)
def zone_events(t, S, route, length, dt):
    """Zone entry (front past stop line) and exit (rear past target line) times.

    Shape (B, N, Z) on each vehicle's own zone list. A zone already left at
    t = 0 gives -inf for both; a vehicle already inside enters at 0. Also
    returns the sample index range [h_in, h_out) spent inside each zone.
    """
    n_b, n_h, n = S.shape
    z = t.rz_stop.shape[1]
    enter = np.full((n_b, n, z), np.inf)
    leave = np.full((n_b, n, z), np.inf)
    h_in = np.zeros((n_b, n, z), np.int64)
    h_out = np.zeros((n_b, n, z), np.int64)
    for b in range(n_b):
        for i in range(n):
            r = route[i]
            front = S[b, :, i]
            rear = front - length[i]
            for k in range(t.rz_n[r]):
                stop = t.rz_stop[r, k]
                targ = t.rz_targ[r, k]
                if rear[0] >= targ:
                    enter[b, i, k] = -np.inf
                    leave[b, i, k] = -np.inf
                    continue
                enter[b, i, k] = 0.0 if front[0] > stop else _crossing(front, stop, dt)
                leave[b, i, k] = _crossing(rear, targ, dt)
                h_in[b, i, k] = _first_index(front, stop, True)
                h_out[b, i, k] = _first_index(rear, targ, False)
    return enter, leave, h_in, h_out


@njit(cache=True)
def evaluate_batch(t, S, V, route, length, enter, leave, h_in, h_out, weights, involved, pairs, n_pairs, dt):
    """Per-candidate time loss, collision flag, priority fulfilment and crossing order.

    A collision is a sample at which two vehicles of conflicting approaches
    are both inside one zone; only pairs touching ``involved`` vehicles count.
    """
    n_b, n_h, n = S.shape
    loss = np.zeros(n_b)
    collision = np.zeros(n_b, np.bool_)
    fulfilled = np.ones(n_b, np.bool_)
    order = np.zeros((n_b, n, n), np.bool_)
    horizon = (n_h - 1) * dt
    for b in range(n_b):
        total = 0.0
        for i in range(n):
            prev = 0.0
            for h in range(n_h):
                x = 1.0 - V[b, h, i] / speed_limit(t, route[i], S[b, h, i])
                if h > 0:
                    total += weights[i] * 0.5 * (prev + x) * dt
                prev = x
        loss[b] = total
        for i in range(n):
            ri = route[i]
            for j in range(i + 1, n):
                rj = route[j]
                check = involved[b, i] or involved[b, j]
                for m in range(t.pz_n[ri, rj]):
                    ka = t.pz_ka[ri, rj, m]
                    kb = t.pz_kb[ri, rj, m]
                    ei, ej = enter[b, i, ka], enter[b, j, kb]
                    if 0.0 <= ei <= horizon and 0.0 <= ej <= horizon:
                        if ei < ej:
                            order[b, i, j] = True
                        elif ej < ei:
                            order[b, j, i] = True
                    if check and not collision[b]:
                        lo = max(h_in[b, i, ka], h_in[b, j, kb])
                        hi = min(h_out[b, i, ka], h_out[b, j, kb])
                        if lo < hi:
                            collision[b] = True
        for q in range(n_pairs[b]):
            i, j = pairs[b, q, 0], pairs[b, q, 1]
            ri, rj = route[i], route[j]
            for m in range(t.pz_n[ri, rj]):
                ka = t.pz_ka[ri, rj, m]
                kb = t.pz_kb[ri, rj, m]
                t_exit = leave[b, i, ka]
                t_enter = enter[b, j, kb]
                if t_exit == -np.inf or t_enter == -np.inf:
                    continue
                if t_enter < t_exit:
                    fulfilled[b] = False
    return loss, collision, fulfilled, order
