"""Static road scene: lanes, routes, conflict zones and arc-length queries.

All positions are scalar arc lengths ``s`` along a route. Conflict zones are
reduced to per-route ``[s_stop, s_target]`` intervals at map-authoring time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

MAP_VERSION = 1
HEADING_STEP = 0.5  # m
DEFAULT_LOOKAHEAD = 100.0  # m


class MapError(ValueError):
    """Raised for schema violations, dangling references and bad geometry.

    ``path`` points at the offending element, e.g. ``lanes[3].points``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ScenarioKind(str, Enum):
    MAIN_ROAD_INTERSECTION = "main_road_intersection"
    RIGHT_BEFORE_LEFT = "right_before_left"
    ROUNDABOUT = "roundabout"
    NARROWING = "narrowing"


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: np.ndarray  # (n, 2)
    speed_limit: float
    successors: tuple[str, ...] = ()

    @property
    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.centerline, axis=0).T)))


@dataclass(frozen=True)
class Route:
    id: str
    lanes: tuple[str, ...]
    total_length: float
    lane_starts: tuple[float, ...]  # arc length at which each lane begins


@dataclass(frozen=True)
class Approach:
    route_id: str
    s_stop: float
    s_target: float


@dataclass(frozen=True)
class ConflictZone:
    id: str
    approaches: tuple[Approach, ...]
    precedence: tuple[tuple[int, int], ...]  # (winner, loser) approach indices

    def conflicting(self, a: int, b: int) -> bool:
        """Two approaches conflict iff the precedence relates them."""
        return (a, b) in self.precedence or (b, a) in self.precedence

    def winner(self, a: int, b: int) -> int | None:
        if (a, b) in self.precedence:
            return a
        if (b, a) in self.precedence:
            return b
        return None

    def approach_index(self, route_id: str) -> int | None:
        for idx, app in enumerate(self.approaches):
            if app.route_id == route_id:
                return idx
        return None


@dataclass(frozen=True)
class Entry:
    route_id: str
    spawn_s_min: float
    spawn_s_max: float


@dataclass(frozen=True)
class ZoneRef:
    """One conflict zone as seen from one route."""

    zone_id: str
    approach: int
    s_stop: float
    s_target: float


@dataclass
class RoadNetwork:
    lanes: dict[str, Lane]
    routes: dict[str, Route]
    conflict_zones: dict[str, ConflictZone]
    entries: list[Entry]
    scenario_kind: ScenarioKind
    name: str = ""
    _route_zones: dict[str, tuple[ZoneRef, ...]] = field(default_factory=dict, repr=False)
    _tables: Any = field(default=None, repr=False)

    def __post_init__(self):
        per_route: dict[str, list[ZoneRef]] = {rid: [] for rid in self.routes}
        for zid in sorted(self.conflict_zones):
            zone = self.conflict_zones[zid]
            for idx, app in enumerate(zone.approaches):
                per_route[app.route_id].append(ZoneRef(zid, idx, app.s_stop, app.s_target))
        self._route_zones = {
            rid: tuple(sorted(refs, key=lambda z: (z.s_stop, z.zone_id)))
            for rid, refs in per_route.items()
        }

    # -- lookups ---------------------------------------------------------

    @property
    def route_ids(self) -> list[str]:
        return sorted(self.routes)

    def route_zones(self, route_id: str) -> tuple[ZoneRef, ...]:
        return self._route_zones[route_id]

    def routes_from(self, entry_lane: str) -> list[str]:
        return sorted(rid for rid, r in self.routes.items() if r.lanes[0] == entry_lane)

    @property
    def entry_lanes(self) -> list[str]:
        return sorted({self.routes[e.route_id].lanes[0] for e in self.entries})

    def entry_for(self, route_id: str) -> Entry:
        for e in self.entries:
            if e.route_id == route_id:
                return e
        raise KeyError(route_id)

    def lane_index_at(self, route_id: str, s: float) -> int:
        starts = self.routes[route_id].lane_starts
        k = int(np.searchsorted(starts, s, side="right")) - 1
        return min(max(k, 0), len(starts) - 1)

    def lane_at(self, route_id: str, s: float) -> str:
        return self.routes[route_id].lanes[self.lane_index_at(route_id, s)]

    def speed_limit_at(self, route_id: str, s: float) -> float:
        return self.lanes[self.lane_at(route_id, s)].speed_limit

    def shared_zones(self, route_a: str, route_b: str) -> list[tuple[ZoneRef, ZoneRef]]:
        """Zone pairs where the two routes use conflicting approaches."""
        out = []
        refs_b = {z.zone_id: z for z in self.route_zones(route_b)}
        for za in self.route_zones(route_a):
            zb = refs_b.get(za.zone_id)
            if zb is None:
                continue
            if self.conflict_zones[za.zone_id].conflicting(za.approach, zb.approach):
                out.append((za, zb))
        return out

    def first_stop(self, entry_lane: str) -> float:
        """Smallest stop line over all routes starting at ``entry_lane``."""
        stops = [z.s_stop for rid in self.routes_from(entry_lane) for z in self.route_zones(rid)]
        return min(stops) if stops else self.lanes[entry_lane].length

    def exit_point(self, route_id: str, beyond: float = 20.0) -> float:
        zones = self.route_zones(route_id)
        last = max((z.s_target for z in zones), default=0.0)
        return min(last + beyond, self.routes[route_id].total_length)

    @property
    def tables(self):
        """Dense arrays for the compiled kernels (built lazily)."""
        if self._tables is None:
            from ._tables import build_tables

            self._tables = build_tables(self)
        return self._tables[0]

    @property
    def index(self):
        """Route/lane/zone id lists matching the rows of ``tables``."""
        self.tables
        return self._tables[1]


# -- geometry ---------------------------------------------------------------


class RouteGeometry(NamedTuple):
    points: np.ndarray  # (n, 2)
    s: np.ndarray  # cumulative arc length at each point
    seg_heading: np.ndarray  # heading of segment k, (n-1,)


def route_geometry(network: RoadNetwork, route_id: str) -> RouteGeometry:
    route = network.routes[route_id]
    pts = [network.lanes[route.lanes[0]].centerline]
    for lid in route.lanes[1:]:
        pts.append(network.lanes[lid].centerline[1:])
    points = np.vstack(pts)
    seg = np.diff(points, axis=0)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    return RouteGeometry(points, s, np.arctan2(seg[:, 1], seg[:, 0]))


def heading_at(geom: RouteGeometry, s) -> np.ndarray:
    k = np.searchsorted(geom.s, s, side="right") - 1
    k = np.clip(k, 0, len(geom.seg_heading) - 1)
    return geom.seg_heading[k]


def position_at(geom: RouteGeometry, s) -> np.ndarray:
    s = np.clip(np.asarray(s, dtype=float), 0.0, geom.s[-1])
    x = np.interp(s, geom.s, geom.points[:, 0])
    y = np.interp(s, geom.s, geom.points[:, 1])
    return np.stack([x, y], axis=-1)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def max_upcoming_heading_diff(
    network: RoadNetwork,
    route_id: str,
    s: float,
    lookahead: float = DEFAULT_LOOKAHEAD,
    step: float = HEADING_STEP,
) -> float:
    geom = route_geometry(network, route_id)
    return float(_heading_diff_profile(geom, np.array([s]), lookahead, step)[0])


def _heading_diff_profile(geom: RouteGeometry, s_values: np.ndarray, lookahead: float, step: float):
    length = geom.s[-1]
    offsets = np.arange(0.0, lookahead + 1e-9, step)
    s_values = np.clip(s_values, 0.0, length)
    ahead = np.minimum(s_values[:, None] + offsets[None, :], length)
    h0 = heading_at(geom, s_values)
    h = heading_at(geom, ahead)
    return np.max(np.abs(wrap_angle(h - h0[:, None])), axis=1)


def heading_diff_grid(network: RoadNetwork, route_id: str, ds: float, lookahead: float = DEFAULT_LOOKAHEAD):
    geom = route_geometry(network, route_id)
    grid = np.arange(0.0, geom.s[-1] + ds, ds)
    return _heading_diff_profile(geom, grid, lookahead, HEADING_STEP)


# -- route knowledge --------------------------------------------------------


def most_conflicting_route(network: RoadNetwork, entry_lane: str) -> Route:
    candidates = network.routes_from(entry_lane)
    if not candidates:
        raise KeyError(f"lane {entry_lane!r} starts no route")
    # max cardinality, ties to the lexicographically smallest id
    best = min(candidates, key=lambda rid: (-len(network.route_zones(rid)), rid))
    return network.routes[best]


def assumed_route(network: RoadNetwork, route_id: str, lane_index: int) -> str:
    """Most conflicting route consistent with the lanes observed so far."""
    prefix = network.routes[route_id].lanes[: lane_index + 1]
    candidates = [
        rid for rid in network.routes_from(prefix[0]) if network.routes[rid].lanes[: len(prefix)] == prefix
    ]
    return min(candidates, key=lambda rid: (-len(network.route_zones(rid)), rid))


# -- loading ----------------------------------------------------------------


def _require(doc: dict, key: str, path: str):
    if not isinstance(doc, dict) or key not in doc:
        raise MapError(f"{path}.{key}" if path else key, "missing required key")
    return doc[key]


def load_network(document: str | dict | Path, name: str = "") -> RoadNetwork:
    """Parse and validate a map document (JSON text, dict or file path)."""
    if isinstance(document, Path):
        name = name or document.stem
        document = document.read_text()
    doc = json.loads(document) if isinstance(document, str) else document
    if _require(doc, "map_version", "") != MAP_VERSION:
        raise MapError("map_version", f"unsupported version {doc['map_version']!r}")
    try:
        kind = ScenarioKind(_require(doc, "scenario_kind", ""))
    except ValueError as exc:
        raise MapError("scenario_kind", str(exc)) from None

    lanes: dict[str, Lane] = {}
    for i, ld in enumerate(_require(doc, "lanes", "")):
        p = f"lanes[{i}]"
        lid = str(_require(ld, "id", p))
        if lid in lanes:
            raise MapError(f"{p}.id", f"duplicate lane id {lid!r}")
        pts = np.asarray(_require(ld, "points", p), dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise MapError(f"{p}.points", "polyline needs at least two 2D points")
        if np.any(np.hypot(*np.diff(pts, axis=0).T) <= 0.0):
            raise MapError(f"{p}.points", "consecutive points must be distinct")
        vmax = float(_require(ld, "speed_limit_mps", p))
        if not vmax > 0:
            raise MapError(f"{p}.speed_limit_mps", "speed limit must be positive")
        lanes[lid] = Lane(lid, pts, vmax, tuple(str(x) for x in ld.get("successors", [])))
    for i, lane in enumerate(lanes.values()):
        for j, succ in enumerate(lane.successors):
            if succ not in lanes:
                raise MapError(f"lanes[{i}].successors[{j}]", f"unknown lane {succ!r}")

    routes: dict[str, Route] = {}
    for i, rd in enumerate(_require(doc, "routes", "")):
        p = f"routes[{i}]"
        rid = str(_require(rd, "id", p))
        if rid in routes:
            raise MapError(f"{p}.id", f"duplicate route id {rid!r}")
        lane_ids = tuple(str(x) for x in _require(rd, "lane_ids", p))
        if not lane_ids:
            raise MapError(f"{p}.lane_ids", "route needs at least one lane")
        for j, lid in enumerate(lane_ids):
            if lid not in lanes:
                raise MapError(f"{p}.lane_ids[{j}]", f"unknown lane {lid!r}")
            if j and lid not in lanes[lane_ids[j - 1]].successors:
                raise MapError(f"{p}.lane_ids[{j}]", f"{lid!r} is not a successor of {lane_ids[j - 1]!r}")
        lengths = [lanes[lid].length for lid in lane_ids]
        starts = tuple(float(x) for x in np.concatenate([[0.0], np.cumsum(lengths)[:-1]]))
        routes[rid] = Route(rid, lane_ids, float(sum(lengths)), starts)

    zones: dict[str, ConflictZone] = {}
    for i, zd in enumerate(_require(doc, "conflict_zones", "")):
        p = f"conflict_zones[{i}]"
        zid = str(_require(zd, "id", p))
        if zid in zones:
            raise MapError(f"{p}.id", f"duplicate zone id {zid!r}")
        apps = []
        for j, ad in enumerate(_require(zd, "approaches", p)):
            ap = f"{p}.approaches[{j}]"
            rid = str(_require(ad, "route_id", ap))
            if rid not in routes:
                raise MapError(f"{ap}.route_id", f"unknown route {rid!r}")
            s_stop = float(_require(ad, "s_stop_m", ap))
            s_target = float(_require(ad, "s_target_m", ap))
            if not 0.0 <= s_stop < s_target <= routes[rid].total_length + 1e-9:
                raise MapError(ap, f"need 0 <= s_stop < s_target <= route length, got {s_stop}, {s_target}")
            apps.append(Approach(rid, s_stop, s_target))
        if len(apps) < 2:
            raise MapError(f"{p}.approaches", "a zone needs at least two approaches")
        seen = [a.route_id for a in apps]
        if len(set(seen)) != len(seen):
            raise MapError(f"{p}.approaches", "a route may appear in only one approach per zone")
        prec = []
        for j, pair in enumerate(zd.get("precedence", [])):
            if len(pair) != 2 or not all(0 <= int(x) < len(apps) for x in pair):
                raise MapError(f"{p}.precedence[{j}]", "expected [winner, loser] approach indices")
            w, lo = int(pair[0]), int(pair[1])
            if w == lo:
                raise MapError(f"{p}.precedence[{j}]", "precedence must be irreflexive")
            if (lo, w) in prec:
                raise MapError(f"{p}.precedence[{j}]", "precedence must be antisymmetric")
            prec.append((w, lo))
        zones[zid] = ConflictZone(zid, tuple(apps), tuple(prec))

    entries = []
    for i, ed in enumerate(_require(doc, "entries", "")):
        p = f"entries[{i}]"
        rid = str(_require(ed, "route_id", p))
        if rid not in routes:
            raise MapError(f"{p}.route_id", f"unknown route {rid!r}")
        lo, hi = float(_require(ed, "spawn_s_min_m", p)), float(_require(ed, "spawn_s_max_m", p))
        if not 0.0 <= lo <= hi <= routes[rid].total_length:
            raise MapError(p, "spawn range must lie on the route")
        entries.append(Entry(rid, lo, hi))

    return RoadNetwork(lanes, routes, zones, entries, kind, name=name)


def network_to_document(network: RoadNetwork) -> dict:
    return {
        "map_version": MAP_VERSION,
        "scenario_kind": network.scenario_kind.value,
        "lanes": [
            {
                "id": lane.id,
                "points": [[round(float(x), 4), round(float(y), 4)] for x, y in lane.centerline],
                "speed_limit_mps": lane.speed_limit,
                "successors": list(lane.successors),
            }
            for lane in network.lanes.values()
        ],
        "routes": [{"id": r.id, "lane_ids": list(r.lanes)} for r in network.routes.values()],
        "conflict_zones": [
            {
                "id": z.id,
                "approaches": [
                    {"route_id": a.route_id, "s_stop_m": a.s_stop, "s_target_m": a.s_target} for a in z.approaches
                ],
                "precedence": [list(p) for p in z.precedence],
            }
            for z in network.conflict_zones.values()
        ],
        "entries": [
            {"route_id": e.route_id, "spawn_s_min_m": e.spawn_s_min, "spawn_s_max_m": e.spawn_s_max}
            for e in network.entries
        ],
    }


MAPS_DIR = Path(__file__).parent / "maps"
FIXTURES = {
    "main_road": ScenarioKind.MAIN_ROAD_INTERSECTION,
    "right_before_left": ScenarioKind.RIGHT_BEFORE_LEFT,
    "roundabout": ScenarioKind.ROUNDABOUT,
    "narrowing": ScenarioKind.NARROWING,
}

_fixture_cache: dict[str, RoadNetwork] = {}


def load_fixture(name: str) -> RoadNetwork:
    """Load one of the bundled maps; networks are immutable and cached."""
    if name not in _fixture_cache:
        path = MAPS_DIR / f"{name}.json"
        if not path.exists():
            raise KeyError(f"unknown map fixture {name!r}; have {sorted(FIXTURES)}")
        _fixture_cache[name] = load_network(path, name=name)
    return _fixture_cache[name]


def speed_limit_profile(network: RoadNetwork, route_id: str, ds: float) -> np.ndarray:
    route = network.routes[route_id]
    grid = np.arange(0.0, route.total_length + ds, ds)
    k = np.clip(np.searchsorted(route.lane_starts, grid, side="right") - 1, 0, len(route.lanes) - 1)
    limits = np.array([network.lanes[lid].speed_limit for lid in route.lanes])
    return limits[k]
