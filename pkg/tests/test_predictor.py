import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopmaneuver import harness as H
from coopmaneuver.driver import DriverParams, accelerations
from coopmaneuver.map_model import FIXTURES, assumed_route, load_fixture
from coopmaneuver.predictor import (
    COMMIT_TIME,
    DT_PRED,
    HORIZON,
    ScenePrediction,
    predict_batch,
    rollout,
    time_loss,
    waiting_weight,
)
from coopmaneuver.priority import EMPTY, PrioritySet
from coopmaneuver.sim_core import Kind, SceneState, scene_arrays, step

from conftest import scene_of, vehicle

N_SAMPLES = int(round(HORIZON / DT_PRED)) + 1


def _prediction(v: np.ndarray, v_max: np.ndarray) -> ScenePrediction:
    v = np.asarray(v, dtype=float).reshape(N_SAMPLES, -1)
    v_max = np.broadcast_to(np.asarray(v_max, dtype=float), v.shape)
    n = v.shape[1]
    return ScenePrediction(HORIZON, DT_PRED, list(range(n)), ["A"] * n, np.zeros_like(v), v, v_max,
                           np.zeros((n, 0)), np.zeros((n, 0)), [[] for _ in range(n)], False, True, frozenset())


# -- time loss and weights --------------------------------------------------------


def test_time_loss_zero_at_speed_limit():
    assert time_loss(_prediction(np.full(N_SAMPLES, 13.9), 13.9)) == 0.0


def test_time_loss_stopped_whole_horizon():
    assert time_loss(_prediction(np.zeros(N_SAMPLES), 10.0), {0: 1.0}) == pytest.approx(12.0, abs=1e-9)


def test_time_loss_piecewise():
    # half the limit for 6 s, then the limit; the sample at the jump takes the midpoint
    v_max = 10.0
    t = np.arange(N_SAMPLES) * DT_PRED
    v = np.where(t < 6.0 - 1e-9, v_max / 2, v_max)
    v[int(round(6.0 / DT_PRED))] = 0.75 * v_max
    assert time_loss(_prediction(v, v_max), {0: 2.0}) == pytest.approx(6.0, abs=1e-9)


def test_time_loss_sums_weighted_vehicles():
    v = np.zeros((N_SAMPLES, 2))
    v[:, 1] = 10.0
    assert time_loss(_prediction(v, 10.0), {0: 1.5, 1: 4.0}) == pytest.approx(18.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 5), frac=st.floats(0.0, 1.0))
def test_time_loss_non_negative(seed, n, frac):
    rng = np.random.default_rng(seed)
    v_max = rng.uniform(5, 20, size=(N_SAMPLES, n))
    v = v_max * rng.uniform(frac, 1.0, size=v_max.shape)
    loss = time_loss(_prediction(v, v_max))
    assert loss >= 0.0
    assert (loss == 0.0) == bool(np.all(v == v_max))


@pytest.mark.parametrize("t_slow, w", [(0.0, 1.0), (20.0, 3.0), (5.0, 1.5)])
def test_waiting_weight(t_slow, w):
    assert waiting_weight(t_slow) == pytest.approx(w, abs=1e-12)


# -- rollouts -----------------------------------------------------------------------


def test_empty_scene(crossing):
    pred = rollout(SceneState(), crossing)
    assert pred.zone_events == [] and not pred.collision and pred.priority_fulfilled


def test_priority_pair_is_honoured(crossing):
    minor, major = vehicle(1, "B", 20.0, 8.0), vehicle(2, "A", 20.0, 8.0)
    for pair in [(1, 2), (2, 1)]:
        pred = rollout(scene_of(minor, major), crossing, PrioritySet.of([pair]))
        first, second = pair
        assert pred.valid
        assert pred.enter_time(second, "z") >= pred.exit_time(first, "z")
        assert (first, second) in pred.crossing_order


def test_pair_against_vehicle_inside_zone_is_unfulfilled(crossing):
    far, inside = vehicle(1, "A", 10.0, 8.0), vehicle(2, "B", 50.0, 5.0)
    pred = rollout(scene_of(far, inside), crossing, PrioritySet.of([(1, 2)]))
    assert not pred.priority_fulfilled
    assert rollout(scene_of(far, inside), crossing, PrioritySet.of([(2, 1)])).valid


def test_rollout_is_deterministic(main_road):
    scene = H.sample_scenario(H.ScenarioSpec("main_road", 4, cav_percentage=60), main_road)
    a = rollout(scene, main_road)
    b = rollout(scene, main_road)
    assert np.array_equal(a.s, b.s) and np.array_equal(a.v, b.v)
    assert a.zone_events == b.zone_events and a.crossing_order == b.crossing_order


def test_commitment_prefix_is_shared(main_road):
    scene = H.sample_scenario(H.ScenarioSpec("main_road", 2, cav_percentage=100), main_road)
    from coopmaneuver.planner import generate_opt

    cands = generate_opt(EMPTY, scene, main_road)
    assert len(cands) > 2
    committed = cands[2]
    preds = predict_batch(scene, main_road, cands, committed)
    n_commit = int(round(COMMIT_TIME / DT_PRED))
    for p in preds[1:]:
        assert np.array_equal(p.s[: n_commit + 1], preds[0].s[: n_commit + 1])
    assert any(not np.array_equal(p.s, preds[0].s) for p in preds[1:])


def _plain_simulation(scene, network, n_steps, dt):
    """Closed loop through sim_core.step with the driver model and no maneuvers."""
    traj = [np.array([v.s for v in scene.vehicles])]
    params = DriverParams()
    for _ in range(n_steps):
        arr = scene_arrays(scene, network)
        n = len(arr.ids)
        acc = accelerations(network, arr, np.zeros((n, n), dtype=np.int64), np.zeros((n, n), dtype=bool), params)
        scene = step(scene, dict(zip(arr.ids, acc.tolist())), dt)
        traj.append(np.array([v.s for v in scene.vehicles]))
    return np.array(traj)


@pytest.mark.parametrize("name", sorted(FIXTURES))
@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("pct", [0, 50])
def test_empty_rollout_matches_plain_simulation(name, seed, pct):
    network = load_fixture(name)
    scene = H.sample_scenario(H.ScenarioSpec(name, seed, cav_percentage=pct), network)
    # HDVs drive the route the predictor assumes for them
    for veh in scene.vehicles:
        if veh.kind == Kind.HDV:
            veh.route_id = assumed_route(network, veh.route_id, 0)
    pred = rollout(scene, network)
    n_steps = int(round(HORIZON / DT_PRED))
    plain = _plain_simulation(scene, network, n_steps, DT_PRED)
    assert pred.s.shape == plain.shape
    assert np.max(np.abs(pred.s - plain)) <= 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_prediction_invariants(main_road, seed):
    scene = H.sample_scenario(H.ScenarioSpec("main_road", seed, cav_percentage=70), main_road)
    from coopmaneuver.planner import generate_opt

    for pred in predict_batch(scene, main_road, generate_opt(EMPTY, scene, main_road, 20)):
        assert np.all(np.diff(pred.s, axis=0) >= 0.0)
        assert np.all(pred.v >= 0.0)
        for ev in pred.zone_events:
            assert ev.t_enter < ev.t_exit
