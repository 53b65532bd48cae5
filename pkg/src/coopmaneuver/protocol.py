"""Maneuver messages between the coordinator and CAV agents.

Documents are JSON with sorted keys and compact separators, framed by a
4-byte big-endian length prefix. Infinite time bounds are sent as null.
"""

from __future__ import annotations

import itertools
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum

from .driver import DriverParams
from .planner import ConstraintEntry, ConstraintSet, PlannerMemory, PlanResult
from .priority import EMPTY
from .sim_core import SceneState

MCM_VERSION = 1
FEASIBILITY_SLACK = 0.05  # s, one simulation step of discretization allowance
_HEADER = struct.Struct(">I")
_ids = itertools.count(1)


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class Reason(str, Enum):
    INFEASIBLE_TMIN = "infeasible_tmin"
    INFEASIBLE_TMAX = "infeasible_tmax"
    INTERNAL = "internal"


@dataclass(frozen=True)
class ManeuverMessage:
    cycle: int
    recipient: int
    constraints: ConstraintSet
    non_conflicting: frozenset[int] = frozenset()
    maneuver_id: int = 0


@dataclass(frozen=True)
class ManeuverResponse:
    maneuver_id: int
    verdict: Verdict
    reason: Reason | None = None


class ProtocolError(ValueError):
    pass


def _time_out(t: float):
    return None if math.isinf(t) else t


def _frame(doc: dict) -> bytes:
    body = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    return _HEADER.pack(len(body)) + body


def _unframe(data: bytes) -> dict:
    if len(data) < _HEADER.size:
        raise ProtocolError("truncated frame header")
    (n,) = _HEADER.unpack_from(data)
    body = data[_HEADER.size :]
    if len(body) != n:
        raise ProtocolError(f"frame length {n} does not match payload {len(body)}")
    return json.loads(body)


def encode_message(msg: ManeuverMessage) -> bytes:
    return _frame({
        "mcm_version": MCM_VERSION,
        "cycle": msg.cycle,
        "maneuver_id": msg.maneuver_id,
        "recipient": msg.recipient,
        "constraints": [
            {"s_m": e.s, "t_min_s": _time_out(e.t_min), "t_max_s": _time_out(e.t_max)}
            for e in msg.constraints.entries
        ],
        "non_conflicting": sorted(msg.non_conflicting),
    })


def decode_message(data: bytes) -> ManeuverMessage:
    doc = _unframe(data)
    if doc.get("mcm_version") != MCM_VERSION:
        raise ProtocolError(f"unsupported mcm_version {doc.get('mcm_version')!r}")
    entries = tuple(
        ConstraintEntry(
            c["s_m"],
            -math.inf if c["t_min_s"] is None else c["t_min_s"],
            math.inf if c["t_max_s"] is None else c["t_max_s"],
        )
        for c in doc["constraints"]
    )
    return ManeuverMessage(doc["cycle"], doc["recipient"], ConstraintSet(doc["recipient"], entries),
                           frozenset(doc["non_conflicting"]), doc["maneuver_id"])


def encode_response(resp: ManeuverResponse) -> bytes:
    return _frame({
        "maneuver_id": resp.maneuver_id,
        "verdict": resp.verdict.value,
        "reason": resp.reason.value if resp.reason else None,
    })


def decode_response(data: bytes) -> ManeuverResponse:
    doc = _unframe(data)
    return ManeuverResponse(doc["maneuver_id"], Verdict(doc["verdict"]),
                            Reason(doc["reason"]) if doc["reason"] else None)


def issue(plan: PlanResult, k: int, memory: PlannerMemory | None = None, ids=None) -> list[ManeuverMessage]:
    """One message per CAV with constraints or a non-empty non-conflicting set.

    ``ids`` is an iterator of maneuver ids (a process-wide counter by default).
    """
    ids = _ids if ids is None else ids
    by_vehicle = {c.vehicle_id: c for c in plan.constraints}
    recipients = sorted(set(by_vehicle) | {v for v, s in plan.non_conflicting.items() if s})
    out = []
    for vid in recipients:
        msg = ManeuverMessage(k, vid, by_vehicle.get(vid, ConstraintSet(vid)),
                              frozenset(plan.non_conflicting.get(vid, ())), next(ids))
        out.append(msg)
    if memory is not None:
        memory.issued = {m.recipient: m.maneuver_id for m in out}
    return out


# -- CAV side ------------------------------------------------------------------


def min_arrival_time(v: float, distance: float, v_cap: float, a_max: float) -> float:
    """Earliest time to cover ``distance`` accelerating at ``a_max`` up to ``v_cap``."""
    if distance <= 0:
        return 0.0
    if v >= v_cap:
        return distance / v
    t1 = (v_cap - v) / a_max
    d1 = 0.5 * (v + v_cap) * t1
    if d1 >= distance:
        return (-v + math.sqrt(v * v + 2 * a_max * distance)) / a_max
    return t1 + (distance - d1) / v_cap


def route_speed_cap(network, route_id: str, s_from: float, s_to: float) -> float:
    route = network.routes[route_id]
    lo = network.lane_index_at(route_id, s_from)
    hi = network.lane_index_at(route_id, max(s_from, s_to))
    return max(network.lanes[lid].speed_limit for lid in route.lanes[lo : hi + 1])


def check_entry(veh, network, entry: ConstraintEntry, now: float, params: DriverParams,
                slack: float = FEASIBILITY_SLACK) -> Reason | None:
    """Feasibility of one constraint for the current vehicle state (None if feasible).

    ``slack`` tolerates a discretization-sized overshoot of t_max.
    """
    if math.isfinite(entry.t_min):
        if veh.s > entry.s:
            return Reason.INFEASIBLE_TMIN
        d = entry.s - veh.s
        can_stop = veh.v * veh.v / (2 * params.b_emergency) <= d
        v_cap = route_speed_cap(network, veh.route_id, veh.s, entry.s)
        late_anyway = now + min_arrival_time(veh.v, d, v_cap, params.a_max) >= entry.t_min
        if not (can_stop or late_anyway):
            return Reason.INFEASIBLE_TMIN
    if math.isfinite(entry.t_max):
        d = entry.s + veh.length - veh.s
        if d > 0:
            v_cap = route_speed_cap(network, veh.route_id, veh.s, entry.s)
            if now + min_arrival_time(veh.v, d, v_cap, params.a_max) > entry.t_max + slack:
                return Reason.INFEASIBLE_TMAX
    return None


def cav_feasibility(scene: SceneState, network, msg: ManeuverMessage,
                    params: DriverParams = DriverParams()) -> ManeuverResponse:
    veh = scene.vehicle(msg.recipient)
    for entry in msg.constraints.entries:
        reason = check_entry(veh, network, entry, scene.time, params)
        if reason is not None:
            return ManeuverResponse(msg.maneuver_id, Verdict.REJECT, reason)
    return ManeuverResponse(msg.maneuver_id, Verdict.ACCEPT)


def handle_response(memory: PlannerMemory, resp: ManeuverResponse) -> bool:
    """Apply a response; returns True when it aborted the current maneuver.

    A reject for a current maneuver id clears the chosen set and its
    prediction. Responses to superseded ids are ignored.
    """
    if resp.maneuver_id not in memory.issued.values():
        return False
    if resp.verdict == Verdict.REJECT:
        memory.previous = EMPTY
        memory.previous_prediction = None
        memory.aborts += 1
        memory.issued = {}
        return True
    return False


@dataclass
class Channel:
    """In-process, loss-free byte channel carrying framed documents."""

    queue: list[bytes] = field(default_factory=list)

    def send(self, data: bytes) -> None:
        self.queue.append(data)

    def drain(self) -> list[bytes]:
        out, self.queue = self.queue, []
        return out
