"""Centralized maneuver planner: candidate generation, scoring, selection, constraints."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .driver import DriverParams
from .predictor import ScenePrediction, predict_batch, switching_cost
from .priority import EMPTY, PrioritySet, has_cycle
from .sim_core import Kind, SceneState

OPT_BUDGET = 100
CYCLE_BUDGET = 0.2  # s
D_STOP_CAP = 200.0  # m, urgency feature for vehicles with no zone ahead
FOLLOW_RANGE = 100.0  # m


class Method(str, Enum):
    NONE = "NONE"
    NC = "NC"
    FIFO = "FIFO"
    HEUR = "HEUR"
    OPT = "OPT"


@dataclass(frozen=True)
class ConstraintEntry:
    s: float  # waypoint on the vehicle's route
    t_min: float = -math.inf
    t_max: float = math.inf

    def __post_init__(self):
        if self.t_min > self.t_max:
            raise ValueError(f"t_min {self.t_min} > t_max {self.t_max}")


@dataclass(frozen=True)
class ConstraintSet:
    vehicle_id: int
    entries: tuple[ConstraintEntry, ...] = ()


@dataclass
class PlanResult:
    chosen: PrioritySet = EMPTY
    constraints: list[ConstraintSet] = field(default_factory=list)
    non_conflicting: dict[int, set[int]] = field(default_factory=dict)
    metric: float = 0.0
    candidates_evaluated: int = 0
    cycle_runtime: float = 0.0
    prediction: ScenePrediction | None = None
    dropped_pairs: int = 0
    emitted_pairs: list[tuple[int, float, int, float]] = field(default_factory=list)  # (i, s_i, j, s_j)


@dataclass
class PlannerMemory:
    previous: PrioritySet = EMPTY
    previous_prediction: ScenePrediction | None = None
    issued: dict[int, int] = field(default_factory=dict)  # recipient -> current maneuver id
    aborts: int = 0


@dataclass(frozen=True)
class UrgencyFeatures:
    d_stop: float
    v: float
    n_lead: int
    n_foll: int

    def as_array(self) -> np.ndarray:
        return np.array([self.d_stop, self.v, self.n_lead, self.n_foll], dtype=float)


# -- scene queries -----------------------------------------------------------


def remaining_shared_zones(network, a, b) -> list[tuple[str, float, float, float, float]]:
    """Conflicting zones of two vehicles neither of which has left yet.

    Returns (zone_id, a.s_stop, a.s_target, b.s_stop, b.s_target) tuples.
    """
    out = []
    for za, zb in network.shared_zones(a.route_id, b.route_id):
        if a.s - a.length >= za.s_target or b.s - b.length >= zb.s_target:
            continue
        out.append((za.zone_id, za.s_stop, za.s_target, zb.s_stop, zb.s_target))
    return out


def cavs(scene: SceneState):
    return [v for v in scene.vehicles if v.kind == Kind.CAV]


def conflicting_cav_pairs(scene: SceneState, network) -> list[tuple[int, int]]:
    """Unordered CAV pairs (smaller id first) with a shared zone still ahead of both."""
    cs = cavs(scene)
    return [
        (a.id, b.id)
        for a, b in itertools.combinations(cs, 2)
        if remaining_shared_zones(network, a, b)
    ]


def non_conflicting_sets(scene: SceneState, network) -> dict[int, set[int]]:
    cs = cavs(scene)
    conflicting = set(conflicting_cav_pairs(scene, network))
    return {
        a.id: {b.id for b in cs if b.id != a.id and (min(a.id, b.id), max(a.id, b.id)) not in conflicting}
        for a in cs
    }


def distance_to_stop(network, veh) -> float:
    """Distance to the stop line of the next zone not yet left (0 inside a zone)."""
    for z in network.route_zones(veh.route_id):
        if veh.s - veh.length < z.s_target:
            return max(0.0, z.s_stop - veh.s)
    return math.inf


def _position_on(network, route_id: str, other) -> float | None:
    """Front position of ``other`` in the arc coordinates of ``route_id`` (None if off-route)."""
    route = network.routes[route_id]
    for s_pt, shift in ((other.s, 0.0), (other.s - other.length, other.length)):
        lane = network.lane_at(other.route_id, s_pt)
        if lane in route.lanes:
            o_route = network.routes[other.route_id]
            start_other = o_route.lane_starts[o_route.lanes.index(lane)]
            return route.lane_starts[route.lanes.index(lane)] + (s_pt - start_other) + shift
    return None


def urgency_features(scene: SceneState, network, veh) -> UrgencyFeatures:
    d_stop = distance_to_stop(network, veh)
    horizon = veh.s + (d_stop if math.isfinite(d_stop) else 0.0)
    n_lead = n_foll = 0
    for other in scene.vehicles:
        if other.id == veh.id:
            continue
        pos = _position_on(network, veh.route_id, other)
        if pos is None:
            continue
        if veh.s < pos <= horizon + other.length:
            n_lead += 1
        elif veh.s - FOLLOW_RANGE <= pos < veh.s:
            n_foll += 1
    return UrgencyFeatures(min(d_stop, D_STOP_CAP), veh.v, n_lead, n_foll)


def fifo_urgency(d_stop: float, v: float) -> float:
    """Negated arrival-time estimate: earlier arrival means more urgent."""
    return -d_stop / max(v, 0.1)


def order_by_urgency(pairs, urgency: dict[int, float]) -> PrioritySet:
    out = set()
    for a, b in pairs:
        if urgency[a] > urgency[b] or (urgency[a] == urgency[b] and a < b):
            out.add((a, b))
        else:
            out.add((b, a))
    return PrioritySet(frozenset(out))


def generate_fifo(scene: SceneState, network) -> PrioritySet:
    u = {v.id: fifo_urgency(distance_to_stop(network, v), v.v) for v in cavs(scene)}
    return order_by_urgency(conflicting_cav_pairs(scene, network), u)


def generate_heur(scene: SceneState, network, urgency_model) -> PrioritySet:
    if urgency_model.sizes[0] != 4:
        raise ValueError("urgency model must take 4 inputs")
    cs = cavs(scene)
    if not cs:
        return EMPTY
    x = np.stack([urgency_features(scene, network, v).as_array() for v in cs])
    u = dict(zip((v.id for v in cs), (float(y) for y in urgency_model.forward_batch(x))))
    return order_by_urgency(conflicting_cav_pairs(scene, network), u)


# -- OPT ---------------------------------------------------------------------


def _pair_zones(scene, network) -> dict[tuple[int, int], list[str]]:
    cs = cavs(scene)
    out = {}
    for a, b in itertools.combinations(cs, 2):
        zones = [z[0] for z in remaining_shared_zones(network, a, b)]
        if zones:
            out[(a.id, b.id)] = zones
    return out


def is_valid(candidate: PrioritySet, pair_zones: dict[tuple[int, int], list[str]]) -> bool:
    """Every pair conflicts and the relation restricted to each zone is acyclic."""
    by_zone: dict[str, list[tuple[int, int]]] = {}
    for i, j in candidate.pairs:
        zones = pair_zones.get((min(i, j), max(i, j)))
        if not zones:
            return False
        for z in zones:
            by_zone.setdefault(z, []).append((i, j))
    return not any(has_cycle(edges) for edges in by_zone.values() if len(edges) > 2)


def generate_opt(previous: PrioritySet, scene: SceneState, network, budget: int = OPT_BUDGET) -> list[PrioritySet]:
    """Local-search neighbourhood of the previous priority set, in a fixed order."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    pz = _pair_zones(scene, network)
    prev = PrioritySet(frozenset(p for p in previous.pairs if (min(p), max(p)) in pz))
    ordered = list(prev)
    free = [p for p in sorted(pz) if p not in prev.pairs and p[::-1] not in prev.pairs]
    additions = sorted([p for p in free] + [p[::-1] for p in free])

    cands = [prev, EMPTY]
    cands += [prev.without(p) for p in ordered]
    cands += [prev.reversed(p) for p in ordered]
    cands += [prev.with_pair(p) for p in additions]
    # group moves: one vehicle ahead of (or behind) everything it still conflicts with
    for v in sorted({x for p in free for x in p}):
        mine = [p if p[0] == v else p[::-1] for p in free if v in p]
        if len(mine) > 1:
            cands.append(PrioritySet(prev.pairs | set(mine)))
            cands.append(PrioritySet(prev.pairs | {p[::-1] for p in mine}))
    for x, y in itertools.combinations(additions, 2):
        if len(cands) >= 4 * budget:
            break
        if set(x) != set(y):
            cands.append(PrioritySet(prev.pairs | {x, y}))

    out, seen = [], set()
    for c in cands:
        key = c.key()
        if key in seen:
            continue
        seen.add(key)
        if c.pairs and not is_valid(c, pz):
            continue
        out.append(c)
        if len(out) == budget:
            break
    return out


# -- scoring and selection ---------------------------------------------------


def maneuver_metric(prediction: ScenePrediction, previous: PrioritySet | None = None,
                    previous_prediction: ScenePrediction | None = None) -> float:
    """Weighted time loss plus the crossing-order switching penalty."""
    prev_order = previous_prediction.crossing_order if previous_prediction is not None else None
    return prediction.loss + switching_cost(prediction.crossing_order, prev_order)


def extract_constraints(chosen: PrioritySet, prediction: ScenePrediction, network) -> tuple[list[ConstraintSet], int]:
    """Turn each priority pair into a t_max for the prioritized and a t_min for the yielder.

    Returns the merged constraint sets and the number of pairs dropped because
    the prioritized vehicle does not leave the zone within the horizon.
    Times are absolute: the prediction's start time plus the predicted offset.
    """
    constraints, dropped, _ = _extract(chosen, prediction, network)
    return constraints, dropped


def _extract(chosen, prediction, network):
    """``extract_constraints`` plus the (i, s_i, j, s_j) waypoints actually emitted."""
    now = prediction.t_start
    emitted = []
    bounds: dict[int, dict[float, list[float]]] = {}
    dropped = 0
    for i, j in chosen:
        if i not in prediction.ids or j not in prediction.ids:
            dropped += 1
            continue
        ri = prediction.routes[prediction.ids.index(i)]
        rj = prediction.routes[prediction.ids.index(j)]
        pending = []
        for za, zb in network.shared_zones(ri, rj):
            t_exit = prediction.exit_time(i, za.zone_id)
            t_enter_j = prediction.enter_time(j, zb.zone_id)
            if t_exit == -math.inf or t_enter_j == -math.inf:
                continue  # zone already consumed
            if not math.isfinite(t_exit):
                pending = None
                break
            pending.append((za.s_target, zb.s_stop, now + t_exit))
        if pending is None:
            dropped += 1
            continue
        for s_i, s_j, t_abs in pending:
            emitted.append((i, s_i, j, s_j))
            b_i = bounds.setdefault(i, {}).setdefault(s_i, [-math.inf, math.inf])
            b_i[1] = min(b_i[1], t_abs)
            b_j = bounds.setdefault(j, {}).setdefault(s_j, [-math.inf, math.inf])
            b_j[0] = max(b_j[0], t_abs)
    out = [
        ConstraintSet(vid, tuple(ConstraintEntry(s, lo, hi) for s, (lo, hi) in sorted(wps.items())))
        for vid, wps in sorted(bounds.items())
    ]
    return out, dropped, emitted


def _weights(scene: SceneState) -> dict[int, float]:
    from .predictor import waiting_weight

    return {v.id: waiting_weight(v.t_slow) for v in scene.vehicles}


def plan_cycle(
    scene: SceneState,
    network,
    method: Method | str,
    memory: PlannerMemory,
    params: DriverParams = DriverParams(),
    urgency_model=None,
    budget: int = OPT_BUDGET,
    runtime_budget: float | None = None,
) -> PlanResult:
    """One planning cycle: generate, predict, select, extract. Updates ``memory``."""
    t0 = time.perf_counter()
    method = Method(method)
    if method == Method.NONE:
        return PlanResult(cycle_runtime=time.perf_counter() - t0)
    nc = non_conflicting_sets(scene, network)
    if method == Method.NC:
        return PlanResult(non_conflicting=nc, cycle_runtime=time.perf_counter() - t0)

    if method == Method.OPT:
        cands = generate_opt(memory.previous, scene, network, budget)
    elif method == Method.FIFO:
        cands = [generate_fifo(scene, network)]
    else:
        if urgency_model is None:
            raise ValueError("HEUR needs an urgency model")
        cands = [generate_heur(scene, network, urgency_model)]

    preds = predict_batch(scene, network, cands, memory.previous, params,
                          weights=_weights(scene), non_conflicting=nc)
    scores = np.array([
        maneuver_metric(p, memory.previous, memory.previous_prediction) if p.valid else np.inf
        for p in preds
    ])
    if np.isfinite(scores).any():
        best = int(np.argmin(scores))  # first minimum: previous set, then lowest index
        chosen, pred = cands[best], preds[best]
    else:
        # every candidate discarded: abort to the empty set
        chosen = EMPTY
        if EMPTY in cands:
            pred = preds[cands.index(EMPTY)]
        else:
            pred = predict_batch(scene, network, [EMPTY], memory.previous, params,
                                 weights=_weights(scene), non_conflicting=nc)[0]

    if runtime_budget is not None and time.perf_counter() - t0 > runtime_budget and memory.previous_prediction is not None:
        chosen, pred = memory.previous, memory.previous_prediction
    metric = maneuver_metric(pred, memory.previous, memory.previous_prediction)
    constraints, dropped, emitted = _extract(chosen, pred, network)
    memory.previous = chosen
    memory.previous_prediction = pred
    return PlanResult(chosen, constraints, nc, float(metric), len(cands), time.perf_counter() - t0, pred, dropped,
                      emitted)
