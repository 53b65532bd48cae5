"""Authoring of the bundled fixture maps.

Geometry is laid out programmatically; conflict zones are derived offline from
centerline proximity and written into the map documents under ``maps/``.
Regenerate with ``python -m coopmaneuver.fixtures``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .map_model import MAPS_DIR, MAP_VERSION, ScenarioKind, load_network

KMH = 1.0 / 3.6
LANE_OFFSET = 1.75  # m, right-hand traffic
CONFLICT_WIDTH = 2.6  # m, centerline distance below which two paths conflict
SAMPLE = 0.1  # m


@dataclass
class _Route:
    id: str
    lanes: list[str]
    arm: str = ""
    turn: str = ""  # straight | left | exit1..3 | through
    major: bool = False


@dataclass
class _Builder:
    kind: ScenarioKind
    lanes: dict[str, dict] = field(default_factory=dict)
    routes: list[_Route] = field(default_factory=list)

    def lane(self, lid: str, points, speed: float):
        pts = _dedupe(np.asarray(points, dtype=float))
        self.lanes[lid] = {"id": lid, "points": pts, "speed_limit_mps": speed, "successors": []}

    def route(self, r: _Route):
        for a, b in zip(r.lanes, r.lanes[1:]):
            if b not in self.lanes[a]["successors"]:
                self.lanes[a]["successors"].append(b)
        self.routes.append(r)


def _dedupe(pts: np.ndarray) -> np.ndarray:
    keep = np.concatenate([[True], np.hypot(*np.diff(pts, axis=0).T) > 1e-6])
    return pts[keep]


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _right(theta: float) -> np.ndarray:
    return np.array([math.sin(theta), -math.cos(theta)])


def _line(p0, p1, spacing=5.0) -> np.ndarray:
    n = max(int(math.ceil(np.hypot(*(np.asarray(p1) - p0)) / spacing)), 1)
    return np.linspace(p0, p1, n + 1)


def _bezier(p0, h0, p1, h1, spacing=0.5) -> np.ndarray:
    """Cubic Bezier between two poses, resampled roughly every ``spacing`` m."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    k = 0.55 * np.hypot(*(p1 - p0))
    c0, c1 = p0 + k * _unit(h0), p1 - k * _unit(h1)
    t = np.linspace(0.0, 1.0, 400)[:, None]
    curve = (1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * c0 + 3 * (1 - t) * t**2 * c1 + t**3 * p1
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(curve, axis=0).T))])
    n = max(int(math.ceil(s[-1] / spacing)), 2)
    grid = np.linspace(0.0, s[-1], n + 1)
    return np.stack([np.interp(grid, s, curve[:, 0]), np.interp(grid, s, curve[:, 1])], axis=1)


def _arc(radius: float, a0: float, a1: float, spacing=0.5) -> np.ndarray:
    n = max(int(math.ceil(radius * abs(a1 - a0) / spacing)), 2)
    ang = np.linspace(a0, a1, n + 1)
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


# -- scene layouts ----------------------------------------------------------

ARMS = {"E": 0.0, "N": math.pi / 2, "W": math.pi, "S": -math.pi / 2}
TURN_RANK = {"straight": 0, "right": 1, "left": 2}  # oncoming precedence on equal-rank roads


def _four_arm(kind: ScenarioKind, speed: float, major_arms=("E", "W"), turns=None) -> _Builder:
    """Four arms with a straight route and one turn per arm (``turns`` maps arm -> left|right)."""
    turns = turns or {a: "left" for a in ARMS}
    b = _Builder(kind)
    box, l_in, l_out = 7.0, 110.0, 50.0
    ends = {}
    for arm, th in ARMS.items():
        h_in = th + math.pi
        p_in_end = box * _unit(th) + LANE_OFFSET * _right(h_in)
        p_in_start = (box + l_in) * _unit(th) + LANE_OFFSET * _right(h_in)
        b.lane(f"in_{arm}", _line(p_in_start, p_in_end), speed)
        p_out_start = box * _unit(th) + LANE_OFFSET * _right(th)
        p_out_end = (box + l_out) * _unit(th) + LANE_OFFSET * _right(th)
        b.lane(f"out_{arm}", _line(p_out_start, p_out_end), speed)
        ends[arm] = (p_in_end, h_in, p_out_start, th)
    names = list(ARMS)
    for arm in names:
        p0, h0, _, _ = ends[arm]
        th = ARMS[arm]
        straight = names[(names.index(arm) + 2) % 4]
        # a left turn leaves heading th - pi/2, i.e. through the arm at that angle
        left = min(names, key=lambda a: abs(math.remainder(ARMS[a] - (th - math.pi / 2), 2 * math.pi)))
        right = min(names, key=lambda a: abs(math.remainder(ARMS[a] - (th + math.pi / 2), 2 * math.pi)))
        for turn, dest in (("straight", straight), (turns[arm], left if turns[arm] == "left" else right)):
            _, _, p1, h1 = ends[dest]
            cid = f"c_{arm}_{turn}"
            pts = _line(p0, p1, 1.0) if turn == "straight" else _bezier(p0, h0, p1, h1)
            b.lane(cid, pts, speed)
            b.route(_Route(f"{arm}_{turn}", [f"in_{arm}", cid, f"out_{dest}"], arm, turn, arm in major_arms))
    return b


def _roundabout() -> _Builder:
    b = _Builder(ScenarioKind.ROUNDABOUT)
    rc, delta, l_in, l_out = 16.0, math.radians(20.0), 100.0, 45.0
    v_app, v_circ = 50 * KMH, 30 * KMH
    names = list(ARMS)
    nodes = []  # (angle, kind, arm)
    for arm, th in ARMS.items():
        nodes.append((th + delta, "entry", arm))
        nodes.append((th - delta, "exit", arm))
    nodes.sort(key=lambda n: n[0] % (2 * math.pi))
    seg_ids = []
    for i, (a0, k0, arm0) in enumerate(nodes):
        a1 = nodes[(i + 1) % len(nodes)][0]
        a0n, a1n = a0 % (2 * math.pi), a1 % (2 * math.pi)
        if a1n <= a0n:
            a1n += 2 * math.pi
        sid = f"circ_{i}"
        b.lane(sid, _arc(rc, a0n, a1n), v_circ)
        seg_ids.append(sid)
    node_index = {(k, arm): i for i, (_, k, arm) in enumerate(nodes)}
    for arm, th in ARMS.items():
        h_in = th + math.pi
        # wide splitter island keeps entry and exit ramps of one arm apart
        p_ramp = (rc + 14.0) * _unit(th) + 2 * LANE_OFFSET * _right(h_in)
        b.lane(f"in_{arm}", _line(p_ramp + l_in * _unit(th), p_ramp), v_app)
        a_entry = th + delta
        b.lane(f"ent_{arm}", _bezier(p_ramp, h_in, rc * _unit(a_entry), a_entry + math.pi / 2), v_circ)
        a_exit = th - delta
        p_out = (rc + 14.0) * _unit(th) + 2 * LANE_OFFSET * _right(th)
        b.lane(f"ext_{arm}", _bezier(rc * _unit(a_exit), a_exit + math.pi / 2, p_out, th), v_circ)
        b.lane(f"out_{arm}", _line(p_out, p_out + l_out * _unit(th)), v_app)
    for arm in names:
        i0 = node_index[("entry", arm)]
        for n in (1, 2, 3):
            dest = names[(names.index(arm) + n) % 4]
            i1 = node_index[("exit", dest)]
            segs, i = [], i0
            while i != i1:
                segs.append(seg_ids[i])
                i = (i + 1) % len(seg_ids)
            lanes = [f"in_{arm}", f"ent_{arm}", *segs, f"ext_{dest}", f"out_{dest}"]
            b.route(_Route(f"{arm}_exit{n}", lanes, arm, f"exit{n}"))
    return b


def _narrowing() -> _Builder:
    b = _Builder(ScenarioKind.NARROWING)
    v_road, v_narrow = 50 * KMH, 30 * KMH
    half, taper, l_in, l_out = 15.0, 10.0, 180.0, 50.0
    for name, sign, major in (("eb", 1.0, True), ("wb", -1.0, False)):
        y = -sign * LANE_OFFSET
        x0 = -sign * (half + taper)
        b.lane(f"in_{name}", np.array([[x0 - sign * l_in, y], [x0, y]]), v_road)
        xs = np.arange(0.0, 2 * (half + taper) + 1e-9, 0.5)
        pts = []
        for d in xs:
            x = x0 + sign * d
            u = abs(x)
            if u <= half:
                off = 0.0
            else:
                t = (u - half) / taper
                off = y * (0.5 - 0.5 * math.cos(math.pi * t))
            pts.append([x, off])
        b.lane(f"nar_{name}", np.array(pts), v_narrow)
        x1 = sign * (half + taper)
        b.lane(f"out_{name}", np.array([[x1, y], [x1 + sign * l_out, y]]), v_road)
        b.route(_Route(f"{name}_through", [f"in_{name}", f"nar_{name}", f"out_{name}"], name, "through", major))
    return b


# -- conflict extraction ----------------------------------------------------


def _sample_route(b: _Builder, r: _Route):
    pts, lane_of, s_acc = [], [], 0.0
    s_list = []
    for lid in r.lanes:
        p = np.asarray(b.lanes[lid]["points"])
        seg = np.hypot(*np.diff(p, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        grid = np.arange(0.0, cum[-1], SAMPLE)
        pts.append(np.stack([np.interp(grid, cum, p[:, 0]), np.interp(grid, cum, p[:, 1])], axis=1))
        lane_of += [lid] * len(grid)
        s_list.append(grid + s_acc)
        s_acc += cum[-1]
    return np.vstack(pts), np.array(lane_of), np.concatenate(s_list), s_acc


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
    return list(zip(idx[0::2], idx[1::2] - 1))


def _entry_heading(b: _Builder, r: _Route) -> float:
    p = np.asarray(b.lanes[r.lanes[0]]["points"])
    d = p[-1] - p[-2]
    return math.atan2(d[1], d[0])


def _winner(kind: ScenarioKind, b: _Builder, ra: _Route, rb: _Route, lane_a: str, lane_b: str) -> int:
    """0 if route a has precedence over route b in their shared zone, else 1."""
    if kind == ScenarioKind.ROUNDABOUT:
        # circulating traffic has priority over entering traffic
        enter_a = lane_a in (ra.lanes[0], ra.lanes[1])
        enter_b = lane_b in (rb.lanes[0], rb.lanes[1])
        if enter_a != enter_b:
            return 1 if enter_a else 0
    elif ra.major != rb.major and kind in (ScenarioKind.NARROWING, ScenarioKind.MAIN_ROAD_INTERSECTION):
        return 0 if ra.major else 1
    if kind in (ScenarioKind.MAIN_ROAD_INTERSECTION, ScenarioKind.RIGHT_BEFORE_LEFT):
        ha, hb = _entry_heading(b, ra), _entry_heading(b, rb)
        rel = math.remainder(hb - ha, 2 * math.pi)
        if abs(abs(rel) - math.pi / 2) < 0.3:
            # b travels at ha + pi/2 when it comes from a's right
            return 1 if rel > 0 else 0
        if ra.turn != rb.turn:
            return 0 if TURN_RANK[ra.turn] < TURN_RANK[rb.turn] else 1
    return 0 if ra.id < rb.id else 1


def _zones(b: _Builder) -> list[dict]:
    samples = {r.id: _sample_route(b, r) for r in b.routes}
    zones = []
    for ia, ra in enumerate(b.routes):
        for rb in b.routes[ia + 1 :]:
            if ra.lanes[0] == rb.lanes[0]:
                continue  # same entry: followers, not conflicts
            pa, la, sa, _ = samples[ra.id]
            pb, lb, sb, _ = samples[rb.id]
            shared = set(ra.lanes) & set(rb.lanes)
            ua = np.array([lane not in shared for lane in la])
            ub = np.array([lane not in shared for lane in lb])
            d = np.hypot(pa[:, None, 0] - pb[None, :, 0], pa[:, None, 1] - pb[None, :, 1])
            close = (d < CONFLICT_WIDTH) & ua[:, None] & ub[None, :]
            runs_a = _runs(close.any(axis=1))
            runs_b = _runs(close.any(axis=0))
            for a0, a1 in runs_a:
                for b0, b1 in runs_b:
                    if not close[a0 : a1 + 1, b0 : b1 + 1].any():
                        continue
                    # a region starting right where a shared lane ends is a diverge
                    if (a0 > 0 and la[a0 - 1] in shared) or (b0 > 0 and lb[b0 - 1] in shared):
                        continue
                    w = _winner(b.kind, b, ra, rb, la[a0], lb[b0])
                    zones.append(
                        {
                            "approaches": [
                                {"route_id": ra.id, "s_stop_m": round(float(sa[a0]), 2),
                                 "s_target_m": round(float(sa[a1]) + SAMPLE, 2)},
                                {"route_id": rb.id, "s_stop_m": round(float(sb[b0]), 2),
                                 "s_target_m": round(float(sb[b1]) + SAMPLE, 2)},
                            ],
                            "precedence": [[w, 1 - w]],
                        }
                    )
    zones.sort(key=lambda z: (z["approaches"][0]["route_id"], z["approaches"][1]["route_id"], z["approaches"][0]["s_stop_m"]))
    for i, z in enumerate(zones):
        z["id"] = f"Z{i:02d}"
    return [{"id": z["id"], "approaches": z["approaches"], "precedence": z["precedence"]} for z in zones]


def build_document(kind: ScenarioKind) -> dict:
    if kind == ScenarioKind.MAIN_ROAD_INTERSECTION:
        # the main road carries left turns, the side road turns right onto it
        b = _four_arm(kind, 50 * KMH, turns={"E": "left", "W": "left", "N": "right", "S": "right"})
    elif kind == ScenarioKind.RIGHT_BEFORE_LEFT:
        b = _four_arm(kind, 30 * KMH, major_arms=())
    elif kind == ScenarioKind.ROUNDABOUT:
        b = _roundabout()
    else:
        b = _narrowing()
    zones = _zones(b)
    entries = []
    for r in b.routes:
        in_len = float(np.sum(np.hypot(*np.diff(np.asarray(b.lanes[r.lanes[0]]["points"]), axis=0).T)))
        first = min(
            [a["s_stop_m"] for z in zones for a in z["approaches"] if a["route_id"] == r.id] + [in_len]
        )
        entries.append({"route_id": r.id, "spawn_s_min_m": 5.0, "spawn_s_max_m": round(min(in_len, first) - 15.0, 2)})
    return {
        "map_version": MAP_VERSION,
        "scenario_kind": kind.value,
        "lanes": [
            {**ld, "points": [[round(float(x), 4), round(float(y), 4)] for x, y in ld["points"]]}
            for ld in b.lanes.values()
        ],
        "routes": [{"id": r.id, "lane_ids": r.lanes} for r in b.routes],
        "conflict_zones": zones,
        "entries": entries,
    }


def write_fixtures():
    from .map_model import FIXTURES

    MAPS_DIR.mkdir(exist_ok=True)
    for name, kind in FIXTURES.items():
        doc = build_document(kind)
        load_network(doc)  # validate before writing
        (MAPS_DIR / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    write_fixtures()
