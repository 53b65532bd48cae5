import json

import numpy as np
import pytest

from coopmaneuver import harness as H
from coopmaneuver.map_model import FIXTURES, load_fixture, load_network
from coopmaneuver.planner import Method
from coopmaneuver.priority import EMPTY
from coopmaneuver.sim_core import Kind

from conftest import crossing_doc, scene_of, vehicle


# -- scenario sampling --------------------------------------------------------------


def test_single_vehicle():
    scene = H.sample_scenario(H.ScenarioSpec("main_road", 0, vehicle_count=1))
    assert len(scene.vehicles) == 1


@pytest.mark.parametrize("pct, n_cav", [(0, 0), (40, 4), (100, 10), (25, 3), (15, 2), (5, 1)])
def test_cav_count_rounds_half_up(pct, n_cav):
    spec = H.ScenarioSpec("main_road", 1, cav_percentage=pct)
    scene = H.sample_scenario(spec)
    assert spec.n_cav == n_cav
    assert sum(v.kind == Kind.CAV for v in scene.vehicles) == n_cav


@pytest.mark.parametrize("bad", [dict(vehicle_count=0), dict(vehicle_count=11), dict(cav_percentage=101),
                                 dict(duration=0.0), dict(map="nowhere"), dict(method="MAGIC")])
def test_bad_specs(bad):
    with pytest.raises(ValueError):
        H.ScenarioSpec(**bad)


@pytest.mark.parametrize("name", sorted(FIXTURES))
@pytest.mark.parametrize("seed", range(10))
def test_placement_is_valid(name, seed):
    network = load_fixture(name)
    scene = H.sample_scenario(H.ScenarioSpec(name, seed), network)
    assert len(scene.vehicles) == H.MAX_VEHICLES
    for v in scene.vehicles:
        assert v.s - v.length >= 0
        assert 0 <= v.v <= network.speed_limit_at(v.route_id, v.s)
        for z in network.route_zones(v.route_id):
            assert not (v.s > z.s_stop and v.s - v.length < z.s_target)
    by_lane = {}
    for v in scene.vehicles:
        by_lane.setdefault(network.routes[v.route_id].lanes[0], []).append(v)
    for vs in by_lane.values():
        vs.sort(key=lambda v: v.s)
        for behind, ahead in zip(vs, vs[1:]):
            assert ahead.s - ahead.length - behind.s >= 0


def test_placement_independent_of_method_and_share():
    base = H.sample_scenario(H.ScenarioSpec("main_road", 5, cav_percentage=0))
    for pct in (40, 100):
        for method in Method:
            other = H.sample_scenario(H.ScenarioSpec("main_road", 5, cav_percentage=pct, method=method))
            assert [(v.route_id, v.s, v.v) for v in other.vehicles] == [(v.route_id, v.s, v.v) for v in base.vehicles]


def test_cav_sets_are_nested_in_seed():
    cav = lambda pct: {v.id for v in H.sample_scenario(H.ScenarioSpec("main_road", 3, cav_percentage=pct)).vehicles
                       if v.kind == Kind.CAV}  # noqa: E731
    assert cav(20) <= cav(40) <= cav(100)


# -- HEUR dataset ---------------------------------------------------------------------


def test_mirrored_scene_gives_mirrored_label(crossing):
    # swapping both the right of way and the vehicles mirrors the scene exactly
    mirrored = load_network(crossing_doc(precedence=((1, 0),)), name="mirrored")
    scene = scene_of(vehicle(1, "A", 20.0, 8.0), vehicle(2, "B", 20.0, 8.0))
    assert H.pair_label(scene, crossing, 1, 2, EMPTY) == pytest.approx(
        H.pair_label(scene, mirrored, 2, 1, EMPTY), abs=1e-9)


def test_pair_label_antisymmetric_and_favours_major_road(crossing):
    scene = scene_of(vehicle(1, "A", 20.0, 8.0), vehicle(2, "B", 20.0, 8.0))
    label = H.pair_label(scene, crossing, 1, 2, EMPTY)
    assert H.pair_label(scene, crossing, 2, 1, EMPTY) == -label
    # the committed prefix runs the default right of way, so the minor vehicle is already braking
    assert label > 0


def test_closer_vehicle_label_positive(crossing):
    scene = scene_of(vehicle(1, "B", 35.0, 5.0), vehicle(2, "A", 10.0, 5.0))
    assert H.pair_label(scene, crossing, 1, 2, EMPTY) > 0
    assert H.pair_label(scene, crossing, 2, 1, EMPTY) < 0


def test_infeasible_order_has_no_label(crossing):
    # 8 m/s with 12 m to the stop line cannot yield comfortably
    scene = scene_of(vehicle(1, "A", 35.0, 8.0), vehicle(2, "B", 10.0, 8.0))
    assert H.pair_label(scene, crossing, 1, 2, EMPTY) is None


def test_dataset_generation_is_deterministic(tmp_path):
    a = H.generate_heur_dataset(n_runs=2, run_length=10.0, seed=3)
    b = H.generate_heur_dataset(n_runs=2, run_length=10.0, seed=3)
    assert len(a) > 0
    assert np.array_equal(a.xi, b.xi) and np.array_equal(a.xj, b.xj) and np.array_equal(a.target, b.target)
    a.save(tmp_path / "d.npz")
    c = H.PairDataset.load(tmp_path / "d.npz")
    assert np.array_equal(c.target, a.target) and c.n_runs == 2 and c.run_length == 10.0
    with pytest.raises(ValueError):
        H.generate_heur_dataset(n_runs=0)


def test_dataset_split_partitions():
    ds = H.PairDataset(np.arange(40.0).reshape(10, 4), np.zeros((10, 4)), np.arange(10.0))
    train, test = ds.split(0.2, seed=1)
    assert len(train) == 8 and len(test) == 2
    assert sorted(train.target.tolist() + test.target.tolist()) == list(range(10))


# -- sweeps ---------------------------------------------------------------------------


def _small_config(**kw):
    d = dict(maps=["main_road"], seeds=[0], methods=["NONE", "OPT"], cav_pcts=[100], duration=8.0)
    d.update(kw)
    return H.SweepConfig.from_dict(d)


def test_experiment_rows_and_report(tmp_path):
    report = H.run_experiment(_small_config(), tmp_path)
    assert len(report.rows) == 2 and report.failures == 0
    cells = {c["method"]: c for c in report.cells}
    assert cells["NONE"]["mean_wait_s_ratio"] == 1.0
    assert len(H.read_csv(tmp_path / "runs.csv")) == 2
    assert json.loads((tmp_path / "report.json").read_text())["cells"] == json.loads(json.dumps(report.cells))


def test_experiment_is_reproducible():
    a = H.run_experiment(_small_config())
    b = H.run_experiment(_small_config())
    strip = lambda rows: [{k: r[k] for k in H.CSV_COLUMNS if k not in H.RUNTIME_COLUMNS} for r in rows]  # noqa: E731
    assert strip(a.rows) == strip(b.rows)


def test_cells_are_independent():
    alone = H.run_experiment(_small_config(methods=["OPT"]))
    together = H.run_experiment(_small_config(methods=["NONE", "NC", "OPT"]))
    opt = [r for r in together.rows if r["method"] == "OPT"]
    assert opt[0]["mean_wait_s"] == alone.rows[0]["mean_wait_s"]
    assert opt[0]["throughput_per_h"] == alone.rows[0]["throughput_per_h"]


def test_replay_row_reproduces_metrics(tmp_path):
    H.run_experiment(_small_config(methods=["FIFO"]), tmp_path)
    row = H.read_csv(tmp_path / "runs.csv")[0]
    fresh = H.replay_row(row)
    for k in H.CSV_COLUMNS:
        if k not in H.RUNTIME_COLUMNS:
            assert fresh[k] == row[k], k


@pytest.mark.parametrize("bad", [dict(maps=["nowhere"]), dict(methods=["MAGIC"]), dict(colour="red"),
                                 dict(driver={"a_max": -1.0})])
def test_sweep_config_validation(bad):
    with pytest.raises(ValueError):
        _small_config(**bad)


def test_aggregate_ratio_against_none():
    rows = []
    for seed, (w_none, w_opt) in enumerate([(10.0, 5.0), (20.0, 5.0)]):
        for meth, w in (("NONE", w_none), ("OPT", w_opt)):
            rows.append({"map": "m", "seed": seed, "method": meth, "cav_pct": 100, "mean_wait_s": w,
                         "throughput_per_h": 100.0, "stop_rate": 0.0, "critical_pet_rate": 0.0,
                         "p97_cycle_ms": 1.0, "max_cycle_ms": 2.0})
    cells = {c["method"]: c for c in H.aggregate(rows)}
    assert cells["OPT"]["mean_wait_s_ratio"] == pytest.approx(5.0 / 15.0)
    assert cells["OPT"]["throughput_per_h_ratio"] == 1.0
    assert cells["OPT"]["stop_rate_ratio"] == 1.0


def test_run_records_safety_counters():
    res = H.run_scenario(H.ScenarioSpec("main_road", 2, cav_percentage=100, duration=20.0, method=Method.OPT))
    row = res.row
    assert row["collisions"] == 0 and row["maneuver_violations"] == 0
    assert row["constraint_order_violations"] == 0
    assert all(t_min >= t_max for t_max, t_min in res.emitted_pairs)


@pytest.mark.parametrize("seed", range(4))
def test_recorded_pairs_are_ordered_on_roundabout(seed):
    # a dropped pair must not be paired up with unrelated constraints at the same waypoints
    res = H.run_scenario(H.ScenarioSpec("roundabout", seed, method=Method.FIFO))
    assert res.emitted_pairs
    assert res.row["constraint_order_violations"] == 0
