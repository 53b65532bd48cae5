"""Scenario sampling, closed-loop runs, sweeps and HEUR training data."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cav_agent import CavControlState, control_arrays, late_violation
from .driver import DriverParams, accelerations
from .map_model import FIXTURES, RoadNetwork, load_fixture
from .metrics import Occupancy, SimulationLog, compute_run_metrics
from .mlp import MlpModel, sign_accuracy, train_pairwise
from .planner import Method, PlannerMemory, conflicting_cav_pairs, plan_cycle, urgency_features
from .predictor import predict_batch
from .priority import PrioritySet
from .protocol import (
    ManeuverResponse, Reason, Verdict, cav_feasibility, decode_message, decode_response,
    encode_message, encode_response, handle_response, issue,
)
from .sim_core import (
    DT_SIM, PLAN_EVERY, Kind, SceneState, VehicleState, flush_pending, needs_reinsertion,
    reinsert, scene_arrays, step,
)

log = logging.getLogger(__name__)

MAX_VEHICLES = 10
PLACEMENT_ATTEMPTS = 1000
MODELS_DIR = Path(__file__).parent / "models"
DEFAULT_MODEL = MODELS_DIR / "heur_urgency.json"

CSV_COLUMNS = [
    "map", "seed", "method", "cav_pct", "mean_wait_s", "throughput_per_h", "stop_rate",
    "critical_pet_rate", "max_cycle_ms", "p97_cycle_ms",
    # extra columns
    "n_pet", "n_critical", "collisions", "cav_conflicts", "maneuver_violations",
    "constraint_order_violations", "aborts", "dropped_pairs", "vehicle_count", "duration_s",
]
RUNTIME_COLUMNS = ("max_cycle_ms", "p97_cycle_ms")


@dataclass(frozen=True)
class ScenarioSpec:
    map: str = "main_road"
    seed: int = 0
    vehicle_count: int = MAX_VEHICLES
    cav_percentage: int = 100
    duration: float = 60.0
    method: Method = Method.NONE

    def __post_init__(self):
        if self.map not in FIXTURES:
            raise ValueError(f"unknown map {self.map!r}; have {sorted(FIXTURES)}")
        if not 1 <= self.vehicle_count <= MAX_VEHICLES:
            raise ValueError(f"vehicle_count must be in 1..{MAX_VEHICLES}")
        if not 0 <= self.cav_percentage <= 100:
            raise ValueError("cav_percentage must be in 0..100")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        object.__setattr__(self, "method", Method(self.method))

    @property
    def n_cav(self) -> int:
        return int(math.floor(self.vehicle_count * self.cav_percentage / 100 + 0.5))


class PlacementError(RuntimeError):
    pass


def scenario_rng(spec: ScenarioSpec, stream: int = 0) -> np.random.Generator:
    """Seeded stream independent of method and CAV percentage."""
    return np.random.default_rng([spec.seed, zlib.crc32(spec.map.encode()), stream])


def _fits(network, placed: list[VehicleState], cand: VehicleState, params: DriverParams) -> bool:
    lane = network.routes[cand.route_id].lanes[0]
    for other in placed:
        if network.routes[other.route_id].lanes[0] != lane:
            continue
        ahead, behind = (other, cand) if other.s >= cand.s else (cand, other)
        if ahead.s - ahead.length - behind.s < params.s0 + behind.v * params.T:
            return False
    return True


def _initially_clear(network, scene: SceneState) -> bool:
    """No zone co-occupancy and nobody starts inside a zone it would have to yield at."""
    for veh in scene.vehicles:
        for z in network.route_zones(veh.route_id):
            if veh.s > z.s_stop and veh.s - veh.length < z.s_target:
                return False
    return True


def sample_scenario(spec: ScenarioSpec, network: RoadNetwork | None = None,
                    params: DriverParams = DriverParams()) -> SceneState:
    """Random routes, spawn positions and speeds; CAVs assigned per percentage."""
    network = network or load_fixture(spec.map)
    rng = scenario_rng(spec)
    entries = network.entries
    for _ in range(PLACEMENT_ATTEMPTS):
        placed: list[VehicleState] = []
        for vid in range(spec.vehicle_count):
            for _ in range(50):
                e = entries[int(rng.integers(len(entries)))]
                s = float(rng.uniform(e.spawn_s_min, e.spawn_s_max))
                v_lim = network.speed_limit_at(e.route_id, s)
                v = float(rng.uniform(0.5, 1.0)) * v_lim
                # able to stop comfortably before the first stop line
                d = network.first_stop(network.routes[e.route_id].lanes[0]) - s
                v = min(v, math.sqrt(2 * params.b_comf * max(d - params.s0, 0.0)))
                cand = VehicleState(vid, Kind.HDV, e.route_id, s, v)
                if cand.s - cand.length >= 0 and _fits(network, placed, cand, params):
                    placed.append(cand)
                    break
            else:
                break
        if len(placed) == spec.vehicle_count:
            scene = SceneState(0.0, placed)
            if _initially_clear(network, scene):
                break
    else:
        raise PlacementError(f"could not place vehicles for {spec}")
    kind_rng = scenario_rng(spec, stream=1)
    cav_ids = set(kind_rng.permutation(spec.vehicle_count)[: spec.n_cav].tolist())
    for veh in scene.vehicles:
        veh.kind = Kind.CAV if veh.id in cav_ids else Kind.HDV
    return scene


# -- closed loop ---------------------------------------------------------------


class ZoneTracker:
    """Turns per-step positions into interpolated zone occupancies."""

    def __init__(self, network: RoadNetwork):
        self.network = network
        self.open: dict[tuple[int, str], Occupancy] = {}
        self.closed: list[Occupancy] = []

    def update(self, before: SceneState, after: SceneState, dt: float) -> None:
        prev = {v.id: v for v in before.vehicles}
        for veh in after.vehicles:
            old = prev.get(veh.id)
            if old is None or old.route_id != veh.route_id:
                continue
            for z in self.network.route_zones(veh.route_id):
                key = (veh.id, z.zone_id)
                if old.s <= z.s_stop < veh.s:
                    t = before.time + dt * (z.s_stop - old.s) / (veh.s - old.s)
                    self.open[key] = Occupancy(z.zone_id, z.approach, veh.id, t)
                rear0, rear1 = old.s - veh.length, veh.s - veh.length
                if rear0 < z.s_target <= rear1 and key in self.open:
                    t = before.time + dt * (z.s_target - rear0) / (rear1 - rear0)
                    occ = self.open.pop(key)
                    self.closed.append(Occupancy(occ.zone_id, occ.approach, occ.vehicle_id, occ.t_enter, t))

    def occupancies(self) -> list[Occupancy]:
        return self.closed + sorted(self.open.values(), key=lambda o: (o.t_enter, o.vehicle_id))


@dataclass
class RunResult:
    spec: ScenarioSpec
    row: dict
    log: SimulationLog
    emitted_pairs: list[tuple[float, float]] = field(default_factory=list)  # (prioritized t_max, yielder t_min)


def _zone_conflicting(network):
    def conflicting(zone_id: str, a: int, b: int) -> bool:
        return network.conflict_zones[zone_id].conflicting(a, b)

    return conflicting


def _constraint_pairs(plan) -> list[tuple[float, float]]:
    """(t_max of prioritized, t_min of yielder) for each pair and zone the plan emitted."""
    by_vehicle = {c.vehicle_id: {e.s: e for e in c.entries} for c in plan.constraints}
    return [(by_vehicle[i][s_i].t_max, by_vehicle[j][s_j].t_min) for i, s_i, j, s_j in plan.emitted_pairs]


def _cav_cooccupancy(network, scene: SceneState, controls) -> list[tuple[tuple[int, int, str], bool]]:
    """Conflicting co-occupancies between CAVs this step, flagged if under a maneuver."""
    inside: dict[str, list] = {}
    for veh in scene.vehicles:
        if veh.kind != Kind.CAV:
            continue
        for z in network.route_zones(veh.route_id):
            if veh.s > z.s_stop and veh.s - veh.length < z.s_target:
                inside.setdefault(z.zone_id, []).append((veh.id, z.approach))
    out = []
    for zid, occ in inside.items():
        zone = network.conflict_zones[zid]
        for (a, pa), (b, pb) in itertools.combinations(occ, 2):
            if zone.conflicting(pa, pb):
                managed = any(controls.get(x) is not None and controls[x].constraints is not None
                              and controls[x].constraints.entries for x in (a, b))
                out.append(((min(a, b), max(a, b), zid), managed))
    return out


_warm = False


def warm_up() -> None:
    """Load (or compile) the numeric kernels once per process.

    Called before the first measured run so that planner cycle times do not
    include one-off compilation.
    """
    global _warm
    if _warm:
        return
    _warm = True
    run_scenario(ScenarioSpec("main_road", 0, MAX_VEHICLES, 100, 1.0, Method.OPT))


def run_scenario(spec: ScenarioSpec, params: DriverParams = DriverParams(), urgency_model=None,
                 runtime_budget: float | None = None, network: RoadNetwork | None = None,
                 observer=None) -> RunResult:
    """Simulate one scenario closed loop and compute its metrics row.

    ``observer(scene, controls, plan)`` is called after every step; ``plan`` is
    the cycle's PlanResult on planner steps and None otherwise.
    """
    warm_up()
    network = network or load_fixture(spec.map)
    network.tables  # built once per map, outside the timed planner cycles
    scene = sample_scenario(spec, network, params)
    rng = scenario_rng(spec, stream=2)
    method = spec.method
    if method == Method.HEUR and urgency_model is None:
        urgency_model = load_default_model()
    memory = PlannerMemory()
    controls = {v.id: CavControlState(params=params) for v in scene.vehicles if v.kind == Kind.CAV}
    ids = itertools.count(1)
    tracker = ZoneTracker(network)
    runtimes: list[float] = []
    emitted: list[tuple[float, float]] = []
    cav_conflicts: set = set()
    violations: set = set()
    dropped = 0
    n_steps = int(round(spec.duration / DT_SIM))

    def abort():
        for ctl in controls.values():
            ctl.clear_maneuver()

    for k in range(n_steps):
        plan = None
        if method != Method.NONE and k % PLAN_EVERY == 0:
            plan = plan_cycle(scene, network, method, memory, params, urgency_model,
                              runtime_budget=runtime_budget)
            runtimes.append(plan.cycle_runtime)
            dropped += plan.dropped_pairs
            emitted.extend(_constraint_pairs(plan))
            msgs = [decode_message(encode_message(m)) for m in issue(plan, k, memory, ids)]
            received = {m.recipient: m for m in msgs}
            for vid, ctl in controls.items():
                m = received.get(vid)
                ctl.non_conflicting = m.non_conflicting if m else frozenset()
                ctl.constraints = m.constraints if m and m.constraints.entries else None
                ctl.maneuver_id = m.maneuver_id if m else None
            responses = [decode_response(encode_response(cav_feasibility(scene, network, m, params)))
                         for m in msgs if scene.vehicle(m.recipient) is not None]
            if any([handle_response(memory, r) for r in responses]):
                abort()
        # deadlines that became unreachable are reported back immediately
        for veh in scene.vehicles:
            ctl = controls.get(veh.id)
            if ctl is not None and ctl.maneuver_id is not None and late_violation(scene, network, veh, ctl):
                resp = ManeuverResponse(ctl.maneuver_id, Verdict.REJECT, Reason.INFEASIBLE_TMAX)
                if handle_response(memory, resp):
                    abort()
                break

        arr = scene_arrays(scene, network)
        ovr, nc, hold, treq = control_arrays(scene, network, arr, controls, params)
        acc = accelerations(network, arr, ovr, nc, params, hold, treq)
        new = step(scene, dict(zip(arr.ids, acc.tolist())), DT_SIM, network)
        tracker.update(scene, new, DT_SIM)
        for key, managed in _cav_cooccupancy(network, new, controls):
            cav_conflicts.add(key)
            if managed:
                violations.add(key)
        for veh in list(new.vehicles):
            if needs_reinsertion(network, veh):
                if veh.id in controls:
                    controls[veh.id].clear_maneuver()
                new = reinsert(new, network, veh.id, rng, params)
        scene = flush_pending(new, network, params)
        if observer is not None:
            observer(scene, controls, plan)

    vehicles = sorted(scene.vehicles + scene.pending, key=lambda v: v.id)
    sim_log = SimulationLog(vehicles, tracker.occupancies(), runtimes, _zone_conflicting(network))
    m = compute_run_metrics(sim_log, spec.duration)
    row = {
        "map": spec.map, "seed": spec.seed, "method": method.value, "cav_pct": spec.cav_percentage,
        "mean_wait_s": m.mean_wait, "throughput_per_h": m.throughput, "stop_rate": m.stop_rate,
        "critical_pet_rate": m.critical_pet_rate, "max_cycle_ms": m.max_cycle_ms, "p97_cycle_ms": m.p97_cycle_ms,
        "n_pet": len(m.pet_values), "n_critical": m.n_critical, "collisions": m.collisions,
        "cav_conflicts": len(cav_conflicts), "maneuver_violations": len(violations),
        "constraint_order_violations": sum(1 for t_max, t_min in emitted if not t_min >= t_max),
        "aborts": memory.aborts, "dropped_pairs": dropped,
        "vehicle_count": spec.vehicle_count, "duration_s": spec.duration,
    }
    return RunResult(spec, row, sim_log, emitted)


# -- HEUR model ------------------------------------------------------------------


def load_default_model() -> MlpModel:
    if not DEFAULT_MODEL.exists():
        raise FileNotFoundError(f"no trained urgency model at {DEFAULT_MODEL}; run `coopmaneuver train-heur`")
    return MlpModel.load(DEFAULT_MODEL)


@dataclass
class PairDataset:
    xi: np.ndarray
    xj: np.ndarray
    target: np.ndarray
    seed: int = 0
    n_runs: int = 0
    run_length: float = 0.0

    def __len__(self):
        return len(self.target)

    def split(self, holdout: float = 0.2, seed: int = 0):
        order = np.random.default_rng(seed).permutation(len(self))
        n_test = int(round(len(self) * holdout))
        te, tr = order[:n_test], order[n_test:]
        part = lambda idx: PairDataset(self.xi[idx], self.xj[idx], self.target[idx], self.seed)  # noqa: E731
        return part(tr), part(te)

    def save(self, path) -> None:
        np.savez_compressed(path, xi=self.xi, xj=self.xj, target=self.target,
                            meta=json.dumps({"seed": self.seed, "n_runs": self.n_runs, "run_length": self.run_length}))

    @classmethod
    def load(cls, path) -> "PairDataset":
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            return cls(z["xi"], z["xj"], z["target"], meta["seed"], meta["n_runs"], meta["run_length"])


HEUR_HORIZON = 10.0  # s
HEUR_SAMPLE_EVERY = 5  # planner cycles between samples


def pair_label(scene: SceneState, network, i: int, j: int, committed: PrioritySet,
               params: DriverParams = DriverParams()) -> float | None:
    """-L(i first) + L(j first) over the short horizon; None if either order is infeasible.

    L is the plain (unit-weight) time loss.
    """
    a, b = predict_batch(scene, network, [PrioritySet.of([(i, j)]), PrioritySet.of([(j, i)])],
                         committed, params, horizon=HEUR_HORIZON, weights={})
    if not (a.valid and b.valid):
        return None
    return -a.loss + b.loss


def generate_heur_dataset(n_runs: int = 200, run_length: float = 120.0, seed: int = 0,
                          params: DriverParams = DriverParams(), progress=None) -> PairDataset:
    """Pairwise urgency labels from FIFO-driven all-CAV runs on random maps."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    rng = np.random.default_rng([seed, 7])
    maps = sorted(FIXTURES)
    xi, xj, y = [], [], []
    for run in range(n_runs):
        name = maps[int(rng.integers(len(maps)))]
        spec = ScenarioSpec(name, int(rng.integers(2**31)), MAX_VEHICLES, 100, run_length, Method.FIFO)
        network = load_fixture(name)
        for scene, memory in _fifo_cycles(spec, network, params):
            if (scene.k // PLAN_EVERY) % HEUR_SAMPLE_EVERY:
                continue
            pairs = conflicting_cav_pairs(scene, network)
            if not pairs:
                continue
            i, j = pairs[int(rng.integers(len(pairs)))]
            label = pair_label(scene, network, i, j, memory.previous, params)
            if label is None:
                continue
            xi.append(urgency_features(scene, network, scene.vehicle(i)).as_array())
            xj.append(urgency_features(scene, network, scene.vehicle(j)).as_array())
            y.append(label)
        if progress:
            progress(run + 1, n_runs, len(y))
    return PairDataset(np.array(xi).reshape(-1, 4), np.array(xj).reshape(-1, 4), np.array(y), seed, n_runs, run_length)


def _fifo_cycles(spec: ScenarioSpec, network, params):
    """Closed-loop FIFO run yielding (scene, planner memory) at every planner cycle."""
    scene = sample_scenario(spec, network, params)
    rng = scenario_rng(spec, stream=2)
    memory = PlannerMemory()
    controls = {v.id: CavControlState(params=params) for v in scene.vehicles}
    for k in range(int(round(spec.duration / DT_SIM))):
        if k % PLAN_EVERY == 0:
            yield scene, memory
            plan = plan_cycle(scene, network, Method.FIFO, memory, params)
            msgs = issue(plan, k, memory)
            received = {m.recipient: m for m in msgs}
            for vid, ctl in controls.items():
                m = received.get(vid)
                ctl.non_conflicting = m.non_conflicting if m else frozenset()
                ctl.constraints = m.constraints if m and m.constraints.entries else None
                ctl.maneuver_id = m.maneuver_id if m else None
            if any([handle_response(memory, cav_feasibility(scene, network, m, params)) for m in msgs]):
                for ctl in controls.values():
                    ctl.clear_maneuver()
        arr = scene_arrays(scene, network)
        ovr, nc, hold, treq = control_arrays(scene, network, arr, controls, params)
        acc = accelerations(network, arr, ovr, nc, params, hold, treq)
        new = step(scene, dict(zip(arr.ids, acc.tolist())), DT_SIM, network)
        for veh in list(new.vehicles):
            if needs_reinsertion(network, veh):
                controls[veh.id].clear_maneuver()
                new = reinsert(new, network, veh.id, rng, params)
        scene = flush_pending(new, network, params)


@dataclass
class TrainReport:
    n_train: int
    n_test: int
    final_loss: float
    holdout_sign_accuracy: float
    history: list[float]


def train_heur(dataset: PairDataset, epochs: int = 200, seed: int = 0, holdout: float = 0.2,
               lr: float = 1e-3) -> tuple[MlpModel, TrainReport]:
    train, test = dataset.split(holdout, seed)
    model, hist = train_pairwise(MlpModel.init(seed=seed), train.xi, train.xj, train.target,
                                 epochs=epochs, lr=lr, seed=seed)
    acc = sign_accuracy(model, test.xi, test.xj, test.target) if len(test) else float("nan")
    return model, TrainReport(len(train), len(test), hist[-1], acc, hist)


# -- sweeps ----------------------------------------------------------------------


@dataclass
class SweepConfig:
    maps: list[str] = field(default_factory=lambda: ["main_road"])
    seeds: list[int] = field(default_factory=lambda: list(range(30)))
    methods: list[str] = field(default_factory=lambda: [m.value for m in Method])
    cav_pcts: list[int] = field(default_factory=lambda: [0, 20, 40, 60, 80, 100])
    duration: float = 60.0
    vehicle_count: int = MAX_VEHICLES
    driver: dict = field(default_factory=dict)
    heur_model: str | None = None
    workers: int = 1
    runtime_budget: float | None = None  # s; off by default to keep runs deterministic

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        for m in cfg.maps:
            if m not in FIXTURES:
                raise ValueError(f"unknown map {m!r}")
        for m in cfg.methods:
            Method(m)
        DriverParams.from_dict(cfg.driver)
        return cfg

    @classmethod
    def load(cls, path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def specs(self) -> list[ScenarioSpec]:
        return [
            ScenarioSpec(m, s, self.vehicle_count, p, self.duration, Method(meth))
            for m, s, p, meth in itertools.product(self.maps, self.seeds, self.cav_pcts, self.methods)
        ]


@dataclass
class ExperimentReport:
    rows: list[dict]
    cells: list[dict]  # aggregated per (map, method, cav_pct)
    failures: int = 0


_worker_state: dict = {}


def _run_cell(args):
    spec, driver, model_path, runtime_budget = args
    params = DriverParams.from_dict(driver)
    model = None
    if spec.method == Method.HEUR:
        key = model_path or "default"
        if key not in _worker_state:
            _worker_state[key] = MlpModel.load(model_path) if model_path else load_default_model()
        model = _worker_state[key]
    try:
        return run_scenario(spec, params, model, runtime_budget).row
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        log.error("run %s failed: %s", spec, exc)
        return None


AGG_METRICS = ["mean_wait_s", "throughput_per_h", "stop_rate", "critical_pet_rate"]


def aggregate(rows: list[dict]) -> list[dict]:
    """Per-cell means plus ratios against the same-seed NONE cells."""
    groups: dict[tuple, dict[int, dict]] = {}
    for r in rows:
        groups.setdefault((r["map"], r["method"], r["cav_pct"]), {})[r["seed"]] = r
    cells = []
    for (m, meth, pct), by_seed in sorted(groups.items()):
        cell = {"map": m, "method": meth, "cav_pct": pct, "n": len(by_seed)}
        base = groups.get((m, Method.NONE.value, pct), {})
        seeds = sorted(set(by_seed) & set(base))
        for key in AGG_METRICS + ["p97_cycle_ms", "max_cycle_ms"]:
            cell[key] = float(np.mean([r[key] for r in by_seed.values()]))
        for key in AGG_METRICS:
            num = np.mean([by_seed[s][key] for s in seeds]) if seeds else float("nan")
            den = np.mean([base[s][key] for s in seeds]) if seeds else float("nan")
            cell[f"{key}_ratio"] = float(num / den) if den else (1.0 if num == den else float("inf"))
        cells.append(cell)
    return cells


def run_experiment(config: SweepConfig, out_dir=None, progress=None) -> ExperimentReport:
    if Method.HEUR.value in config.methods and config.heur_model is None and not DEFAULT_MODEL.exists():
        raise FileNotFoundError("HEUR requested but no urgency model is available")
    jobs = [(s, config.driver, config.heur_model, config.runtime_budget) for s in config.specs()]
    if config.workers > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(config.workers) as pool:
            results = pool.map(_run_cell, jobs, chunksize=1)
    else:
        results = []
        for n, job in enumerate(jobs):
            results.append(_run_cell(job))
            if progress:
                progress(n + 1, len(jobs))
    rows = [r for r in results if r is not None]
    report = ExperimentReport(rows, aggregate(rows), failures=len(results) - len(rows))
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: ExperimentReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(report.rows, out / "runs.csv")
    (out / "report.json").write_text(json.dumps({"failures": report.failures, "cells": report.cells}, indent=1))


def format_value(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: format_value(r[k]) for k in CSV_COLUMNS})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def replay_row(row: dict, driver: dict | None = None, urgency_model=None) -> dict:
    """Re-run the cell a CSV row describes; returns the fresh row (formatted as strings)."""
    spec = ScenarioSpec(row["map"], int(row["seed"]), int(row.get("vehicle_count", MAX_VEHICLES)),
                        int(row["cav_pct"]), float(row.get("duration_s", 60.0)), Method(row["method"]))
    fresh = run_scenario(spec, DriverParams.from_dict(driver or {}), urgency_model).row
    return {k: format_value(fresh[k]) for k in CSV_COLUMNS}


def spec_to_dict(spec: ScenarioSpec) -> dict:
    d = asdict(spec)
    d["method"] = spec.method.value
    return d
