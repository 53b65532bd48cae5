import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopmaneuver.driver import (
    DriverParams,
    EnvObservation,
    GapObservation,
    gap_accept,
    hdv_policy,
    idm_accel,
)
from coopmaneuver.priority import PrioritySet
from coopmaneuver.sim_core import Kind

from conftest import SPEED, scene_of, vehicle

P = DriverParams()
finite_or_inf = st.one_of(st.floats(0.0, 500.0), st.just(math.inf))


# -- gap acceptance ----------------------------------------------------------------


def test_gap_empty_accepts():
    assert gap_accept(GapObservation(15.0, 5.0, math.inf, 10.0))


def test_gap_far_other_accepts():
    # ETAs 3.0 s (self) vs 10.0 s (other)
    assert gap_accept(GapObservation(15.0, 5.0, 100.0, 10.0), P)


def test_gap_close_other_rejects():
    # 3.0 + 1.5 > 3.0
    assert not gap_accept(GapObservation(15.0, 5.0, 30.0, 10.0), P)


def test_gap_other_clamped_speed():
    # a stopped prioritized vehicle counts as 0.1 m/s: 1 m away is 10 s away
    assert gap_accept(GapObservation(15.0, 5.0, 1.0, 0.0), P)


@settings(max_examples=300, deadline=None)
@given(d_targ=finite_or_inf, v=st.floats(0, 30), d1=st.floats(0, 500), extra=st.floats(0, 500), vo=st.floats(0, 30))
def test_gap_monotone_in_other_distance(d_targ, v, d1, extra, vo):
    if gap_accept(GapObservation(d_targ, v, d1, vo), P):
        assert gap_accept(GapObservation(d_targ, v, d1 + extra, vo), P)
        assert gap_accept(GapObservation(d_targ, v, math.inf, vo), P)


# -- IDM ---------------------------------------------------------------------------


def _idm_reference(v, v0, gap, dv, p=P):
    s_star = p.s0 + max(0.0, v * p.T + v * dv / (2 * math.sqrt(p.a_max * p.b_comf)))
    return p.a_max * (1 - (v / v0) ** p.delta_exp - (s_star / gap) ** 2)


def test_idm_equilibrium_on_free_road():
    a = idm_accel(EnvObservation(math.inf, 13.0, 13.0, 0.0))
    assert abs(a) < 0.05


def test_idm_holds_at_stop_line():
    a = idm_accel(EnvObservation(P.s0, 0.0, 13.0, 0.0), yield_point=P.s0)
    assert a <= 0.0


def test_idm_against_textbook_formula():
    obs = EnvObservation(math.inf, 10.0, 15.0, 0.0, d_lead=20.0, v_lead=10.0)
    expected = _idm_reference(10.0, 15.0, 20.0, 0.0)
    # 2 * (1 - (2/3)^4 - (17/20)^2) = 0.16  ... evaluated numerically
    assert expected == pytest.approx(2 * (1 - (10 / 15) ** 4 - (17 / 20) ** 2))
    assert idm_accel(obs) == pytest.approx(expected, abs=1e-12)


def test_idm_approaching_slower_leader():
    obs = EnvObservation(math.inf, 12.0, 15.0, 0.0, d_lead=30.0, v_lead=6.0)
    assert idm_accel(obs) == pytest.approx(max(_idm_reference(12.0, 15.0, 30.0, 6.0), -P.b_emergency), abs=1e-12)


def test_curve_caps_desired_speed():
    # kappa = (pi/2) / 100 m, v_curve = sqrt(2.5 / kappa) ~ 12.6 m/s
    v_curve = math.sqrt(P.a_lat_max / (math.pi / 2 / P.lookahead))
    a = idm_accel(EnvObservation(math.inf, 12.0, 20.0, math.pi / 2))
    assert a == pytest.approx(_idm_reference(12.0, v_curve, math.inf, 0.0), abs=1e-12)


@settings(max_examples=400, deadline=None)
@given(
    d_stop=finite_or_inf, v=st.floats(0, 40), v_max=st.floats(0.5, 40), dpsi=st.floats(0, math.pi),
    d_lead=st.one_of(st.floats(0, 300), st.just(math.inf)), v_lead=st.floats(0, 40),
    yp=st.one_of(st.none(), st.floats(0, 300)),
)
def test_idm_output_bounded(d_stop, v, v_max, dpsi, d_lead, v_lead, yp):
    a = idm_accel(EnvObservation(d_stop, v, v_max, dpsi, d_lead, v_lead), yp)
    assert -P.b_emergency <= a <= P.a_max


@pytest.mark.parametrize("d0", [0.0, 0.5, 1.0, 2.0])
def test_standing_at_yield_point_never_passes_it(d0):
    line = 50.0
    s, v = line - d0, 0.0
    for _ in range(int(30 / 0.05)):
        a = idm_accel(EnvObservation(line - s, v, SPEED, 0.0), yield_point=line - s)
        v = max(0.0, v + a * 0.05)
        s += v * 0.05
        assert s <= line
    assert s == line - d0


# -- composed policy ----------------------------------------------------------------


def _minor_vs_major():
    minor = vehicle(1, "B", 30.0, 8.0)  # 17 m to its stop line, 23 m to the target line
    major = vehicle(2, "A", 35.0, 10.0)  # 1.2 s from the zone
    return minor, major


def test_policy_free_flow_matches_idm(crossing):
    veh = vehicle(1, "B", 20.0, 6.0, Kind.HDV)
    a = hdv_policy(scene_of(veh), crossing, 1)
    assert a == pytest.approx(idm_accel(EnvObservation(27.0, 6.0, SPEED, 0.0)), abs=1e-12)


def test_policy_minor_yields_to_close_major(crossing):
    minor, major = _minor_vs_major()
    # this is the rejected case of the gap model
    assert not gap_accept(GapObservation(53.0 - minor.s, minor.v, 47.0 - major.s, major.v), P)
    a = hdv_policy(scene_of(minor, major), crossing, 1)
    assert a < 0.0
    assert a < hdv_policy(scene_of(minor), crossing, 1)


def test_policy_override_lets_minor_proceed(crossing):
    minor, major = _minor_vs_major()
    scene = scene_of(minor, major)
    a = hdv_policy(scene, crossing, 1, PrioritySet.of([(1, 2)]))
    assert a > 0.0
    assert a == pytest.approx(hdv_policy(scene_of(minor), crossing, 1))
    # and the major-road CAV now yields instead
    assert hdv_policy(scene, crossing, 2, PrioritySet.of([(1, 2)])) < hdv_policy(scene_of(major), crossing, 2)


def test_policy_unknown_vehicle(crossing):
    with pytest.raises(KeyError):
        hdv_policy(scene_of(vehicle(1, "A", 0.0, 0.0)), crossing, 9)


@settings(max_examples=200, deadline=None)
@given(
    si=st.floats(5.0, 46.0), vi=st.floats(0.0, 12.0), sj=st.floats(5.0, 46.0), vj=st.floats(0.0, 12.0),
    i_on_major=st.booleans(),
)
def test_override_dominance(crossing, si, vi, sj, vj, i_on_major):
    ri, rj = ("A", "B") if i_on_major else ("B", "A")
    vi_, vj_ = vehicle(1, ri, si, vi), vehicle(2, rj, sj, vj)
    with_override = hdv_policy(scene_of(vi_, vj_), crossing, 1, PrioritySet.of([(1, 2)]))
    alone = hdv_policy(scene_of(vi_), crossing, 1)
    assert with_override == pytest.approx(alone, abs=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        DriverParams(T=0.0)
    with pytest.raises(ValueError):
        DriverParams(delta_exp=0.5)
    with pytest.raises(ValueError):
        DriverParams.from_dict({"bogus": 1})
    assert DriverParams.from_dict({"T": 1.2}).T == 1.2
