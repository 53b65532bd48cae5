"""Analytic driver model: IDM car following, yielding and gap acceptance.

The observation types mirror what a learned driver model would consume, so a
trained replacement can be dropped in behind the same functions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _kernel as K


@dataclass(frozen=True)
class DriverParams:
    v0_factor: float = 1.0
    T: float = 1.5  # s
    a_max: float = 2.0  # m/s^2
    b_comf: float = 2.0  # m/s^2
    s0: float = 2.0  # m
    delta_exp: float = 4.0
    b_emergency: float = 6.0  # m/s^2
    a_lat_max: float = 2.5  # m/s^2, curve-speed cap
    tau_gap: float = 1.5  # s
    lookahead: float = 100.0  # m
    tau_clear: float = 1.0  # s, a zone stays occupied until its last user is this far past it

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if self.delta_exp < 1:
            raise ValueError("delta_exp must be >= 1")

    def as_array(self) -> np.ndarray:
        # order must match the P_* constants of the kernel
        return np.array(
            [
                self.v0_factor, self.T, self.a_max, self.b_comf, self.s0,
                self.delta_exp, self.b_emergency, self.a_lat_max, self.tau_gap, self.lookahead,
                self.tau_clear,
            ],
            dtype=float,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "DriverParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown driver parameters: {sorted(unknown)}")
        return cls(**{**asdict(cls()), **d})


@dataclass(frozen=True)
class EnvObservation:
    d_stop: float  # m, inf if no zone ahead
    v: float
    v_max: float
    delta_psi_max: float  # rad
    d_lead: float = math.inf  # m, bumper gap to the leader
    v_lead: float = 0.0


@dataclass(frozen=True)
class GapObservation:
    d_targ: float  # m, yielding vehicle to its target line
    v: float
    d_stop_other: float  # m, prioritized vehicle to its stop line
    v_other: float


def gap_accept(gap: GapObservation, params: DriverParams = DriverParams()) -> bool:
    """Accept iff the other vehicle arrives later than we clear, plus a margin."""
    return bool(K.gap_accept(gap.d_targ, gap.v, gap.d_stop_other, gap.v_other, params.tau_gap, params.a_max))


def idm_accel(obs: EnvObservation, yield_point: float | None = None, params: DriverParams = DriverParams()) -> float:
    """IDM with a curvature speed cap and an optional standing obstacle ``yield_point`` m ahead."""
    p = params.as_array()
    v_des = K.desired_speed(obs.v_max, obs.delta_psi_max, p)
    a = K.idm(obs.v, v_des, obs.d_lead, obs.v - obs.v_lead, p)
    if yield_point is not None:
        a = min(a, K.idm(obs.v, v_des, yield_point, obs.v, p))
        floor = K.yield_floor(obs.v, yield_point, p)
        if floor < 0.0:
            a = min(a, floor)
    return float(min(max(a, -params.b_emergency), params.a_max))


def override_matrix(pairs, slot: dict[int, int], n: int) -> np.ndarray:
    """+1 for the prioritized side of each pair, -1 for the yielding side."""
    ovr = np.zeros((n, n), dtype=np.int64)
    for i, j in pairs:
        if i in slot and j in slot:
            ovr[slot[i], slot[j]] = 1
            ovr[slot[j], slot[i]] = -1
    return ovr


def hdv_policy(scene, network, vehicle_id: int, priority_overrides=None, params: DriverParams = DriverParams()) -> float:
    """Acceleration of one vehicle under the driver model, given the whole scene."""
    from .sim_core import scene_arrays

    arr = scene_arrays(scene, network)
    if vehicle_id not in arr.slot:
        raise KeyError(f"unknown vehicle {vehicle_id}")
    n = len(arr.ids)
    pairs = priority_overrides.pairs if priority_overrides is not None else ()
    ovr = override_matrix(pairs, arr.slot, n)
    acc = accelerations(network, arr, ovr, np.zeros((n, n), dtype=np.bool_), params)
    return float(acc[arr.slot[vehicle_id]])


def accelerations(network, arr, ovr, nc, params: DriverParams, hold_s=None, treq=None) -> np.ndarray:
    """Vectorized driver step over a ``SceneArrays`` snapshot."""
    n = len(arr.ids)
    inf = np.full(n, np.inf)
    hold_s = inf if hold_s is None else hold_s
    treq_T, treq_s, treq_vcap = (inf, inf, inf) if treq is None else treq
    return K.compute_accels(
        network.tables, arr.s, arr.v, arr.route, arr.length, arr.is_cav, ovr, nc,
        hold_s, treq_T, treq_s, treq_vcap, params.as_array(),
    )
