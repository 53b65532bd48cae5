"""Vehicle state, fixed-step integration and continuous-traffic reinsertion."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .driver import DriverParams

KMH = 1.0 / 3.6
SLOW_SPEED = 10 * KMH  # t_slow clock
WAIT_SPEED = 5 * KMH
STOP_SPEED = 1 * KMH
REINSERT_SPEED = 30 * KMH
REINSERT_BEFORE_ZONE = 45.0  # m
VEHICLE_LENGTH = 4.5  # m
DT_SIM = 0.05  # s
PLAN_EVERY = 4  # sim steps per planner cycle


class Kind(str, Enum):
    HDV = "HDV"
    CAV = "CAV"


@dataclass
class VehicleState:
    id: int
    kind: Kind
    route_id: str
    s: float
    v: float
    a: float = 0.0
    length: float = VEHICLE_LENGTH
    t_slow: float = 0.0
    wait_accum: float = 0.0
    ever_stopped: bool = False
    crossings: int = 0
    passes: int = 1  # journeys started, including the current one
    stopped_passes: int = 0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed must be non-negative")


@dataclass
class SceneState:
    time: float = 0.0
    vehicles: list[VehicleState] = field(default_factory=list)
    k: int = 0
    pending: list[VehicleState] = field(default_factory=list)  # waiting for reinsertion space

    def __post_init__(self):
        ids = [v.id for v in self.vehicles] + [v.id for v in self.pending]
        if len(ids) != len(set(ids)):
            raise ValueError("vehicle ids must be unique")

    def vehicle(self, vid: int) -> VehicleState:
        for veh in self.vehicles:
            if veh.id == vid:
                return veh
        raise KeyError(f"unknown vehicle {vid}")

    def copy(self) -> "SceneState":
        return SceneState(
            self.time,
            [dataclasses.replace(v) for v in self.vehicles],
            self.k,
            [dataclasses.replace(v) for v in self.pending],
        )


class SceneArrays(NamedTuple):
    ids: list[int]
    slot: dict[int, int]
    s: np.ndarray
    v: np.ndarray
    route: np.ndarray  # route index into network.tables
    length: np.ndarray
    is_cav: np.ndarray


def scene_arrays(scene: SceneState, network, routes: dict[int, str] | None = None) -> SceneArrays:
    """Array snapshot of the active vehicles; ``routes`` overrides route ids per vehicle."""
    r_idx = {r: i for i, r in enumerate(network.index.routes)}
    vs = scene.vehicles
    ids = [v.id for v in vs]
    route_of = (lambda v: routes.get(v.id, v.route_id)) if routes else (lambda v: v.route_id)
    return SceneArrays(
        ids,
        {vid: i for i, vid in enumerate(ids)},
        np.array([v.s for v in vs], dtype=float),
        np.array([v.v for v in vs], dtype=float),
        np.array([r_idx[route_of(v)] for v in vs], dtype=np.int64),
        np.array([v.length for v in vs], dtype=float),
        np.array([v.kind == Kind.CAV for v in vs], dtype=np.bool_),
    )


def final_target(network, route_id: str) -> float:
    zones = network.route_zones(route_id)
    return max((z.s_target for z in zones), default=np.inf)


def step(scene: SceneState, accelerations: dict[int, float], dt: float, network=None) -> SceneState:
    """Semi-implicit Euler step with threshold bookkeeping.

    With a ``network``, rear passages of a route's last target line are counted
    as crossings.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    known = {v.id for v in scene.vehicles}
    unknown = set(accelerations) - known
    if unknown:
        raise KeyError(f"unknown vehicle ids {sorted(unknown)}")
    out = scene.copy()
    for veh in out.vehicles:
        if veh.id not in accelerations:
            raise KeyError(f"no acceleration for vehicle {veh.id}")
        a = float(accelerations[veh.id])
        s_old = veh.s
        veh.v = max(0.0, veh.v + a * dt)
        veh.s = veh.s + veh.v * dt
        veh.a = a
        if veh.v < SLOW_SPEED:
            veh.t_slow += dt
        else:
            veh.t_slow = 0.0
        if veh.v < WAIT_SPEED:
            veh.wait_accum += dt
        if veh.v < STOP_SPEED and not veh.ever_stopped:
            veh.ever_stopped = True
            veh.stopped_passes += 1
        if network is not None:
            line = final_target(network, veh.route_id)
            if s_old - veh.length < line <= veh.s - veh.length:
                veh.crossings += 1
    out.k = scene.k + 1
    out.time = out.k * dt
    return out


def needs_reinsertion(network, veh: VehicleState) -> bool:
    return veh.s >= network.exit_point(veh.route_id)


def _insertion_point(scene: SceneState, network, entry_lane: str, v_new: float, params: DriverParams) -> float:
    s_new = network.first_stop(entry_lane) - REINSERT_BEFORE_ZONE
    lane_len = network.lanes[entry_lane].length
    for other in scene.vehicles:
        if network.routes[other.route_id].lanes[0] != entry_lane:
            continue
        rear = other.s - other.length
        if rear < lane_len:  # still (partly) on the entry lane
            s_new = min(s_new, rear - (params.s0 + v_new * params.T))
    return s_new


def reinsert(scene: SceneState, network, vehicle_id: int, rng: np.random.Generator,
             params: DriverParams = DriverParams()) -> SceneState:
    """Move an exiting vehicle back to the start of its originating entry lane.

    A fresh route from the same entry is drawn. Without upstream space the
    vehicle waits in ``scene.pending`` and ``flush_pending`` retries later.
    """
    out = scene.copy()
    veh = out.vehicle(vehicle_id)
    out.vehicles = [v for v in out.vehicles if v.id != vehicle_id]
    entry_lane = network.routes[veh.route_id].lanes[0]
    choices = network.routes_from(entry_lane)
    veh.route_id = choices[int(rng.integers(len(choices)))]
    veh.v = min(veh.v, REINSERT_SPEED)
    veh.t_slow = 0.0 if veh.v >= SLOW_SPEED else veh.t_slow
    veh.ever_stopped = False
    veh.passes += 1
    out.pending.append(veh)
    return flush_pending(out, network, params)


def flush_pending(scene: SceneState, network, params: DriverParams = DriverParams()) -> SceneState:
    if not scene.pending:
        return scene
    still = []
    for veh in scene.pending:
        entry_lane = network.routes[veh.route_id].lanes[0]
        s_new = _insertion_point(scene, network, entry_lane, veh.v, params)
        if s_new - veh.length < 0.0:
            still.append(veh)
            continue
        veh.s = s_new
        scene.vehicles.append(veh)
    scene.vehicles.sort(key=lambda v: v.id)
    scene.pending = still
    return scene
