"""Dense array view of a RoadNetwork for the compiled kernels.

Routes and lanes are indexed by their sorted ids. Ragged per-route data is
padded; counts live in the ``*_n`` arrays.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .map_model import heading_diff_grid, speed_limit_profile

GRID_DS = 0.5  # m


class NetTables(NamedTuple):
    route_len: np.ndarray  # (R,)
    route_nlanes: np.ndarray  # (R,)
    route_lstart: np.ndarray  # (R, K) arc offset of each lane, inf padded
    route_lane: np.ndarray  # (R, K) lane index of each route lane
    lane_off: np.ndarray  # (R, L) arc offset of lane on route, nan if absent
    route_ng: np.ndarray  # (R,) grid points per route
    vlim: np.ndarray  # (R, G) lane speed limit on a GRID_DS grid
    dpsi: np.ndarray  # (R, G) max upcoming heading change
    rz_n: np.ndarray  # (R,)
    rz_zone: np.ndarray  # (R, Z)
    rz_stop: np.ndarray  # (R, Z)
    rz_targ: np.ndarray  # (R, Z)
    pz_n: np.ndarray  # (R, R) number of conflicting shared zones
    pz_ka: np.ndarray  # (R, R, M) zone slot on the first route
    pz_kb: np.ndarray  # (R, R, M) zone slot on the second route
    pz_win: np.ndarray  # (R, R, M) +1 first route wins, -1 second wins, 0 unranked
    assumed: np.ndarray  # (R, K) assumed route index given true route and lane index
    share: np.ndarray  # (R, R) routes have at least one lane in common
    alt_n: np.ndarray  # (R, K) routes consistent with having driven the first k+1 lanes
    alt: np.ndarray  # (R, K, A) their indices
    exit_pt: np.ndarray  # (R,)
    grid_ds: float


class TableIndex(NamedTuple):
    routes: list[str]
    lanes: list[str]
    zones: list[str]


def build_tables(network) -> tuple[NetTables, TableIndex]:
    from .map_model import assumed_route

    routes = network.route_ids
    lanes = sorted(network.lanes)
    zones = sorted(network.conflict_zones)
    r_idx = {r: i for i, r in enumerate(routes)}
    l_idx = {lid: i for i, lid in enumerate(lanes)}
    z_idx = {z: i for i, z in enumerate(zones)}
    n_r, n_l = len(routes), len(lanes)

    k_max = max(len(network.routes[r].lanes) for r in routes)
    route_len = np.array([network.routes[r].total_length for r in routes])
    route_nlanes = np.array([len(network.routes[r].lanes) for r in routes], dtype=np.int64)
    route_lstart = np.full((n_r, k_max), np.inf)
    route_lane = np.zeros((n_r, k_max), dtype=np.int64)
    lane_off = np.full((n_r, n_l), np.nan)
    assumed = np.zeros((n_r, k_max), dtype=np.int64)
    for i, r in enumerate(routes):
        route = network.routes[r]
        for k, (lid, start) in enumerate(zip(route.lanes, route.lane_starts)):
            route_lstart[i, k] = start
            route_lane[i, k] = l_idx[lid]
            lane_off[i, l_idx[lid]] = start
            assumed[i, k] = r_idx[assumed_route(network, r, k)]
        assumed[i, len(route.lanes) :] = assumed[i, len(route.lanes) - 1]

    share = np.array([[bool(set(network.routes[a].lanes) & set(network.routes[b].lanes)) for b in routes]
                      for a in routes])

    # a driver who does not know another vehicle's route considers every continuation
    alts = {}
    for i, r in enumerate(routes):
        lanes_r = network.routes[r].lanes
        for k in range(len(lanes_r)):
            alts[i, k] = [r_idx[q] for q in routes if network.routes[q].lanes[: k + 1] == lanes_r[: k + 1]]
    a_max = max(len(x) for x in alts.values())
    alt_n = np.zeros((n_r, k_max), dtype=np.int64)
    alt = np.zeros((n_r, k_max, a_max), dtype=np.int64)
    for (i, k), lst in alts.items():
        alt_n[i, k] = len(lst)
        alt[i, k, : len(lst)] = lst

    vl = [speed_limit_profile(network, r, GRID_DS) for r in routes]
    dp = [heading_diff_grid(network, r, GRID_DS) for r in routes]
    g_max = max(len(x) for x in vl)
    route_ng = np.array([len(x) for x in vl], dtype=np.int64)
    vlim = np.zeros((n_r, g_max))
    dpsi = np.zeros((n_r, g_max))
    for i in range(n_r):
        vlim[i, : len(vl[i])] = vl[i]
        vlim[i, len(vl[i]) :] = vl[i][-1]
        dpsi[i, : len(dp[i])] = dp[i][: len(vl[i])]

    z_max = max(1, max(len(network.route_zones(r)) for r in routes))
    rz_n = np.zeros(n_r, dtype=np.int64)
    rz_zone = np.full((n_r, z_max), -1, dtype=np.int64)
    rz_stop = np.full((n_r, z_max), np.inf)
    rz_targ = np.full((n_r, z_max), np.inf)
    slot = {}
    for i, r in enumerate(routes):
        refs = network.route_zones(r)
        rz_n[i] = len(refs)
        for k, ref in enumerate(refs):
            rz_zone[i, k] = z_idx[ref.zone_id]
            rz_stop[i, k] = ref.s_stop
            rz_targ[i, k] = ref.s_target
            slot[(r, ref.zone_id)] = k

    pairs = {}
    for a in routes:
        for b in routes:
            if a == b:
                continue
            lst = []
            for za, zb in network.shared_zones(a, b):
                w = network.conflict_zones[za.zone_id].winner(za.approach, zb.approach)
                win = 0 if w is None else (1 if w == za.approach else -1)
                lst.append((slot[(a, za.zone_id)], slot[(b, zb.zone_id)], win))
            pairs[(a, b)] = lst
    m_max = max(1, max(len(v) for v in pairs.values()))
    pz_n = np.zeros((n_r, n_r), dtype=np.int64)
    pz_ka = np.zeros((n_r, n_r, m_max), dtype=np.int64)
    pz_kb = np.zeros((n_r, n_r, m_max), dtype=np.int64)
    pz_win = np.zeros((n_r, n_r, m_max), dtype=np.int64)
    for (a, b), lst in pairs.items():
        ia, ib = r_idx[a], r_idx[b]
        pz_n[ia, ib] = len(lst)
        for m, (ka, kb, win) in enumerate(lst):
            pz_ka[ia, ib, m], pz_kb[ia, ib, m], pz_win[ia, ib, m] = ka, kb, win

    exit_pt = np.array([network.exit_point(r) for r in routes])
    tables = NetTables(
        route_len, route_nlanes, route_lstart, route_lane, lane_off, route_ng, vlim, dpsi,
        rz_n, rz_zone, rz_stop, rz_targ, pz_n, pz_ka, pz_kb, pz_win, assumed, share, alt_n, alt, exit_pt, GRID_DS,
    )
    return tables, TableIndex(routes, lanes, zones)
