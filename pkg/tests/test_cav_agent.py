import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopmaneuver import harness as H
from coopmaneuver.cav_agent import CavControlState, cav_accel, late_violation
from coopmaneuver.driver import DriverParams, hdv_policy
from coopmaneuver.planner import ConstraintEntry, ConstraintSet, Method
from coopmaneuver.protocol import min_arrival_time
from coopmaneuver.sim_core import DT_SIM, Kind, step

from conftest import scene_of, vehicle

P = DriverParams()


def _control(vid, *entries, nc=()):
    return CavControlState(ConstraintSet(vid, tuple(entries)), 1, frozenset(nc))


def _drive(scene, network, vid, control, seconds):
    """Closed loop with only the controlled CAV in the scene; returns (times, positions)."""
    times, pos = [scene.time], [scene.vehicle(vid).s]
    for _ in range(int(round(seconds / DT_SIM))):
        a = cav_accel(scene, network, vid, control)
        scene = step(scene, {vid: a}, DT_SIM)
        times.append(scene.time)
        pos.append(scene.vehicle(vid).s)
    return times, pos


def _crossing_time(times, pos, line):
    for t0, t1, s0, s1 in zip(times, times[1:], pos, pos[1:]):
        if s0 <= line < s1:
            return t0 + (t1 - t0) * (line - s0) / (s1 - s0)
    return math.inf


def test_no_constraints_reduce_to_driver_model(crossing):
    scene = scene_of(vehicle(1, "B", 30.0, 8.0), vehicle(2, "A", 35.0, 10.0))
    for vid in (1, 2):
        assert cav_accel(scene, crossing, vid, CavControlState()) == hdv_policy(scene, crossing, vid)


def test_tmin_holds_vehicle_back(crossing):
    scene = scene_of(vehicle(1, "B", 23.0, 8.0))  # 24 m, 3 s from the stop line
    ctl = _control(1, ConstraintEntry(47.0, t_min=5.0))
    assert cav_accel(scene, crossing, 1, ctl) < cav_accel(scene, crossing, 1, CavControlState())
    times, pos = _drive(scene, crossing, 1, ctl, 12.0)
    t_enter = _crossing_time(times, pos, 47.0)
    assert 5.0 - DT_SIM <= t_enter < math.inf


def test_tmax_pulls_vehicle_forward(crossing):
    scene = scene_of(vehicle(1, "A", 0.0, 0.0))
    free_times, free_pos = _drive(scene, crossing, 1, CavControlState(), 15.0)
    free = _crossing_time(free_times, free_pos, 53.0 + 4.5)
    fastest = min_arrival_time(0.0, 53.0 + 4.5, 10.0, P.a_max)
    assert fastest < free - 0.2
    deadline = 0.5 * (fastest + free)
    ctl = _control(1, ConstraintEntry(53.0, t_max=deadline))
    assert cav_accel(scene, crossing, 1, ctl) >= cav_accel(scene, crossing, 1, CavControlState())
    times, pos = _drive(scene, crossing, 1, ctl, 15.0)
    t_clear = _crossing_time(times, pos, 53.0 + 4.5)
    assert t_clear < free
    assert t_clear <= deadline + DT_SIM


def test_nc_set_suppresses_yielding(crossing):
    minor, major = vehicle(1, "B", 30.0, 8.0), vehicle(2, "A", 35.0, 10.0)
    scene = scene_of(minor, major)
    assert cav_accel(scene, crossing, 1, CavControlState()) < 0.0
    ctl = CavControlState(non_conflicting=frozenset({2}))
    assert cav_accel(scene, crossing, 1, ctl) == pytest.approx(hdv_policy(scene_of(minor), crossing, 1))


def test_hdv_rejected(crossing):
    with pytest.raises(ValueError):
        cav_accel(scene_of(vehicle(1, "A", 0, 0, Kind.HDV)), crossing, 1, CavControlState())


def test_late_violation_detected(crossing):
    veh = vehicle(1, "A", 20.0, 2.0)
    scene = scene_of(veh, time=3.0)
    assert late_violation(scene, crossing, veh, _control(1, ConstraintEntry(53.0, t_max=4.0)))
    assert not late_violation(scene, crossing, veh, _control(1, ConstraintEntry(53.0, t_max=30.0)))
    assert not late_violation(scene, crossing, veh, CavControlState())


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0, 60), v=st.floats(0, 12), route=st.sampled_from(["A", "B"]),
       t_min=st.one_of(st.just(-math.inf), st.floats(0, 20)), t_max=st.one_of(st.just(math.inf), st.floats(0, 20)),
       time=st.floats(0, 10))
def test_accel_bounded(crossing, s, v, route, t_min, t_max, time):
    scene = scene_of(vehicle(1, route, s, v), vehicle(2, "B" if route == "A" else "A", 30.0, 6.0), time=time)
    entries = [ConstraintEntry(47.0, t_min=t_min), ConstraintEntry(53.0, t_max=t_max)]
    a = cav_accel(scene, crossing, 1, _control(1, *entries))
    assert -P.b_emergency <= a <= P.a_max


@pytest.mark.parametrize("seed", range(3))
def test_closed_loop_compliance(seed):
    """Active t_min / t_max hold at the actual stop-line and target-line crossings."""
    net = H.load_fixture("main_road")
    last = {}
    violations = []

    def observe(scene, controls, plan):
        for veh in scene.vehicles:
            prev = last.get(veh.id)
            ctl = controls.get(veh.id)
            last[veh.id] = (veh.route_id, veh.s, scene.time, ctl.constraints if ctl else None)
            if prev is None or prev[0] != veh.route_id or prev[3] is None:
                continue
            _, s0, t0, constraints = prev
            for e in constraints.entries:
                if math.isfinite(e.t_min) and s0 <= e.s < veh.s:
                    t = t0 + DT_SIM * (e.s - s0) / (veh.s - s0)
                    if t < e.t_min - DT_SIM:
                        violations.append(("t_min", veh.id, t, e))
                rear0, rear1 = s0 - veh.length, veh.s - veh.length
                if math.isfinite(e.t_max) and rear0 < e.s <= rear1:
                    t = t0 + DT_SIM * (e.s - rear0) / (rear1 - rear0)
                    if t > e.t_max + DT_SIM:
                        violations.append(("t_max", veh.id, t, e))

    H.run_scenario(H.ScenarioSpec("main_road", seed, cav_percentage=100, duration=30.0, method=Method.OPT),
                   network=net, observer=observe)
    assert violations == []
