"""Scene-consistent closed-loop rollouts under candidate priority sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernel as K
from .driver import DriverParams, override_matrix
from .map_model import assumed_route
from .priority import EMPTY, PrioritySet
from .sim_core import Kind, SceneState, scene_arrays

DT_PRED = 0.1  # s
HORIZON = 12.0  # s
COMMIT_TIME = 1.0  # s, previous plan still executed meanwhile
SWITCH_COST = 1.0  # s per changed crossing-order pair


@dataclass(frozen=True)
class ZoneEvent:
    vehicle_id: int
    zone_id: str
    t_enter: float
    t_exit: float


@dataclass
class ScenePrediction:
    horizon: float
    dt_pred: float
    ids: list[int]
    routes: list[str]  # route each vehicle follows in the rollout
    s: np.ndarray  # (H+1, N)
    v: np.ndarray  # (H+1, N)
    v_max: np.ndarray  # (H+1, N) lane speed limit at the predicted position
    enter: np.ndarray  # (N, Z) per-route zone slots, relative times
    leave: np.ndarray
    zone_slots: list[list[str]]  # zone id of each slot per vehicle
    collision: bool
    priority_fulfilled: bool
    crossing_order: frozenset[tuple[int, int]]
    loss: float = float("nan")  # weighted time loss
    candidate: PrioritySet = field(default=EMPTY)
    t_start: float = 0.0  # scene time the rollout started from

    @property
    def valid(self) -> bool:
        return not self.collision and self.priority_fulfilled

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.s.shape[0]) * self.dt_pred

    @property
    def zone_events(self) -> list[ZoneEvent]:
        out = []
        for i, vid in enumerate(self.ids):
            for k, zid in enumerate(self.zone_slots[i]):
                te, tx = self.enter[i, k], self.leave[i, k]
                if np.isfinite(te) and te >= 0.0:
                    out.append(ZoneEvent(vid, zid, float(te), float(tx)))
        return out

    def exit_time(self, vehicle_id: int, zone_id: str) -> float:
        i = self.ids.index(vehicle_id)
        return float(self.leave[i, self.zone_slots[i].index(zone_id)])

    def enter_time(self, vehicle_id: int, zone_id: str) -> float:
        i = self.ids.index(vehicle_id)
        return float(self.enter[i, self.zone_slots[i].index(zone_id)])


def waiting_weight(t_slow: float) -> float:
    """Weight growing with the time a vehicle has been crawling."""
    return 1.0 + t_slow / 10.0


def rollout_routes(scene: SceneState, network) -> dict[int, str]:
    """CAVs follow their true route; HDVs the most conflicting one consistent with their lane."""
    out = {}
    for veh in scene.vehicles:
        if veh.kind == Kind.CAV:
            out[veh.id] = veh.route_id
        else:
            out[veh.id] = assumed_route(network, veh.route_id, network.lane_index_at(veh.route_id, veh.s))
    return out


def time_loss(prediction: ScenePrediction, weights: dict[int, float] | None = None) -> float:
    """Weighted integral of the relative speed deficit, trapezoidal in time."""
    w = np.array([1.0 if weights is None else weights.get(vid, 1.0) for vid in prediction.ids])
    if not len(w):
        return 0.0
    deficit = 1.0 - prediction.v / prediction.v_max
    per_vehicle = np.trapezoid(deficit, dx=prediction.dt_pred, axis=0)
    return float(np.sum(w * per_vehicle))


def switching_cost(order: frozenset, previous_order: frozenset | None) -> float:
    if previous_order is None:
        return 0.0
    return SWITCH_COST * len(order - previous_order)


def nc_matrix(arr, non_conflicting: dict[int, set[int]] | None) -> np.ndarray:
    n = len(arr.ids)
    nc = np.zeros((n, n), dtype=np.bool_)
    for a, others in (non_conflicting or {}).items():
        if a not in arr.slot:
            continue
        for b in others:
            if b in arr.slot:
                nc[arr.slot[a], arr.slot[b]] = True
    return nc


def predict_batch(
    scene: SceneState,
    network,
    candidates: Sequence[PrioritySet],
    committed: PrioritySet = EMPTY,
    params: DriverParams = DriverParams(),
    horizon: float = HORIZON,
    dt_pred: float = DT_PRED,
    weights: dict[int, float] | None = None,
    non_conflicting: dict[int, set[int]] | None = None,
) -> list[ScenePrediction]:
    """Roll out the scene once per candidate; the committed set applies for the first second."""
    routes = rollout_routes(scene, network)
    arr = scene_arrays(scene, network, routes)
    n = len(arr.ids)
    n_steps = int(round(horizon / dt_pred))
    n_commit = int(round(COMMIT_TIME / dt_pred))
    t = network.tables
    if weights is None:
        weights = {v.id: waiting_weight(v.t_slow) for v in scene.vehicles}
    w = np.array([weights.get(vid, 1.0) for vid in arr.ids])
    nc = nc_matrix(arr, non_conflicting)

    n_b = len(candidates)
    ovr_c = override_matrix(committed.pairs, arr.slot, n)
    ovr = np.zeros((max(n_b, 1), n, n), dtype=np.int64)
    involved = np.zeros((max(n_b, 1), n), dtype=np.bool_)
    p_max = max([len(c) for c in candidates] + [1])
    pairs = np.zeros((max(n_b, 1), p_max, 2), dtype=np.int64)
    n_pairs = np.zeros(max(n_b, 1), dtype=np.int64)
    committed_slots = [arr.slot[v] for v in committed.vehicles if v in arr.slot]
    for b, cand in enumerate(candidates):
        ovr[b] = override_matrix(cand.pairs, arr.slot, n)
        involved[b, committed_slots] = True
        q = 0
        for i, j in cand:
            if i in arr.slot and j in arr.slot:
                involved[b, arr.slot[i]] = involved[b, arr.slot[j]] = True
                pairs[b, q] = arr.slot[i], arr.slot[j]
                q += 1
        n_pairs[b] = q
    if n == 0 or n_b == 0:
        return [_empty_prediction(horizon, dt_pred, n_steps, c, scene.time) for c in candidates]

    S, V = K.rollout_batch(t, arr.s, arr.v, arr.route, arr.length, arr.is_cav, ovr_c, ovr[:n_b], nc,
                           params.as_array(), dt_pred, n_steps, n_commit)
    enter, leave, h_in, h_out = K.zone_events(t, S, arr.route, arr.length, dt_pred)
    loss, collision, fulfilled, order = K.evaluate_batch(
        t, S, V, arr.route, arr.length, enter, leave, h_in, h_out, w, involved[:n_b], pairs[:n_b], n_pairs[:n_b], dt_pred)

    zone_names = network.index.zones
    slots = [[zone_names[z] for z in t.rz_zone[r, : t.rz_n[r]]] for r in arr.route]
    g = np.minimum((S / t.grid_ds).astype(np.int64).clip(min=0), t.route_ng[arr.route] - 1)
    out = []
    for b, cand in enumerate(candidates):
        vmax = t.vlim[arr.route[None, :], g[b]]
        oi, oj = np.nonzero(order[b])
        out.append(ScenePrediction(
            horizon, dt_pred, list(arr.ids), [routes[v] for v in arr.ids], S[b], V[b], vmax,
            enter[b], leave[b], slots, bool(collision[b]), bool(fulfilled[b]),
            frozenset((arr.ids[a], arr.ids[c]) for a, c in zip(oi, oj)), float(loss[b]), cand, scene.time,
        ))
    return out


def _empty_prediction(horizon, dt_pred, n_steps, cand, t_start) -> ScenePrediction:
    z = np.zeros((n_steps + 1, 0))
    return ScenePrediction(horizon, dt_pred, [], [], z, z, np.ones_like(z), np.zeros((0, 0)),
                           np.zeros((0, 0)), [], False, True, frozenset(), 0.0, cand, t_start)


def rollout(scene, network, candidate: PrioritySet = EMPTY, committed: PrioritySet = EMPTY,
            params: DriverParams = DriverParams(), **kw) -> ScenePrediction:
    return predict_batch(scene, network, [candidate], committed, params, **kw)[0]
