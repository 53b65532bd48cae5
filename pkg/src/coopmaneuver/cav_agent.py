"""Longitudinal controller for CAVs executing accepted space-time constraints.

Without constraints a CAV drives exactly like the driver model on its true
route. Constraints modify it in three ways:

* an active t_min at a stop line holds the vehicle there until t_min,
* a t_max at a target line makes it track the arrival time,
* CAVs in its non-conflicting set get no gap-based yields (it still waits
  for one that occupies a zone on its path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from .driver import DriverParams, accelerations
from .planner import ConstraintSet
from .protocol import check_entry, route_speed_cap
from .sim_core import Kind, SceneState, scene_arrays


@dataclass
class CavControlState:
    constraints: ConstraintSet | None = None
    maneuver_id: int | None = None
    non_conflicting: frozenset[int] = frozenset()
    params: DriverParams = field(default_factory=DriverParams)

    def clear_maneuver(self) -> None:
        self.constraints = None
        self.maneuver_id = None

    def active_holds(self, veh, now: float) -> list[float]:
        if self.constraints is None:
            return []
        return [e.s for e in self.constraints.entries
                if math.isfinite(e.t_min) and now < e.t_min and veh.s <= e.s]

    def active_deadlines(self, veh) -> list[tuple[float, float]]:
        if self.constraints is None:
            return []
        return [(e.s, e.t_max) for e in self.constraints.entries
                if math.isfinite(e.t_max) and veh.s - veh.length < e.s]


def control_arrays(scene: SceneState, network, arr, controls: dict[int, CavControlState],
                   params: DriverParams = DriverParams()):
    """Override, non-conflicting, hold and arrival-tracking arrays for the kernel."""
    n = len(arr.ids)
    ovr = np.zeros((n, n), dtype=np.int64)
    nc = np.zeros((n, n), dtype=np.bool_)
    hold = np.full(n, np.inf)
    treq_T = np.full(n, np.inf)
    treq_s = np.full(n, np.inf)
    treq_v = np.full(n, np.inf)
    now = scene.time
    p = params.as_array()
    holds: dict[int, list[float]] = {}
    deadlines: dict[int, list[tuple[float, float]]] = {}
    for veh in scene.vehicles:
        ctl = controls.get(veh.id)
        if veh.kind != Kind.CAV or ctl is None:
            continue
        i = arr.slot[veh.id]
        for other in ctl.non_conflicting:
            if other in arr.slot:
                nc[i, arr.slot[other]] = True
        holds[veh.id] = ctl.active_holds(veh, now)
        if holds[veh.id]:
            hold[i] = min(holds[veh.id])
        deadlines[veh.id] = ctl.active_deadlines(veh)
        best = -np.inf
        for s_w, t_max in deadlines[veh.id]:
            vcap = route_speed_cap(network, veh.route_id, veh.s, s_w)
            a = K.required_accel(veh.v, s_w + veh.length - veh.s, t_max - now, vcap, p)
            if a > best:
                best = a
                treq_T[i], treq_s[i], treq_v[i] = t_max - now, s_w, vcap
    # a CAV with a deadline may pass CAVs held back for it at the same zone
    for vid, dls in deadlines.items():
        if not dls:
            continue
        targets = {s for s, _ in dls}
        veh = scene.vehicle(vid)
        for oid, hs in holds.items():
            if oid == vid or not hs:
                continue
            other = scene.vehicle(oid)
            for za, zb in network.shared_zones(veh.route_id, other.route_id):
                if za.s_target in targets and zb.s_stop in hs:
                    ovr[arr.slot[vid], arr.slot[oid]] = 1
    return ovr, nc, hold, (treq_T, treq_s, treq_v)


def cav_accel(scene: SceneState, network, vehicle_id: int, control: CavControlState,
              controls: dict[int, CavControlState] | None = None) -> float:
    """Acceleration of one CAV given its control state (others from ``controls``)."""
    veh = scene.vehicle(vehicle_id)
    if veh.kind != Kind.CAV:
        raise ValueError(f"vehicle {vehicle_id} is not a CAV")
    controls = dict(controls or {})
    controls[vehicle_id] = control
    arr = scene_arrays(scene, network)
    ovr, nc, hold, treq = control_arrays(scene, network, arr, controls, control.params)
    acc = accelerations(network, arr, ovr, nc, control.params, hold, treq)
    return float(acc[arr.slot[vehicle_id]])


def late_violation(scene: SceneState, network, veh, control: CavControlState) -> bool:
    """True when an accepted deadline can no longer be met even at full acceleration."""
    if control.constraints is None:
        return False
    for e in control.constraints.entries:
        if not math.isfinite(e.t_max) or veh.s - veh.length >= e.s:
            continue
        deadline = type(e)(e.s, -math.inf, e.t_max)
        if check_entry(veh, network, deadline, scene.time, control.params) is not None:
            return True
    return False
