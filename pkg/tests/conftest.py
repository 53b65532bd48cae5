"""Shared builders for small hand-made scenes."""

from __future__ import annotations

import copy
import sys

import pytest

from coopmaneuver.map_model import load_fixture, load_network
from coopmaneuver.sim_core import Kind, SceneState, VehicleState

SPEED = 10.0  # m/s on the test crossing


def crossing_doc(speed: float = SPEED, precedence=((0, 1),), zone=(47.0, 53.0)) -> dict:
    """Two 100 m straight routes crossing at their midpoints; route A is the major road."""
    return {
        "map_version": 1,
        "scenario_kind": "main_road_intersection",
        "lanes": [
            {"id": "a", "points": [[-50, 0], [50, 0]], "speed_limit_mps": speed, "successors": []},
            {"id": "b", "points": [[0, -50], [0, 50]], "speed_limit_mps": speed, "successors": []},
        ],
        "routes": [{"id": "A", "lane_ids": ["a"]}, {"id": "B", "lane_ids": ["b"]}],
        "conflict_zones": [
            {
                "id": "z",
                "approaches": [
                    {"route_id": "A", "s_stop_m": zone[0], "s_target_m": zone[1]},
                    {"route_id": "B", "s_stop_m": zone[0], "s_target_m": zone[1]},
                ],
                "precedence": [list(p) for p in precedence],
            }
        ],
        "entries": [
            {"route_id": "A", "spawn_s_min_m": 5, "spawn_s_max_m": 30},
            {"route_id": "B", "spawn_s_min_m": 5, "spawn_s_max_m": 30},
        ],
    }


@pytest.fixture
def crossing_document():
    return copy.deepcopy(crossing_doc())


@pytest.fixture(scope="session")
def crossing():
    return load_network(crossing_doc(), name="crossing")


@pytest.fixture(scope="session")
def main_road():
    return load_fixture("main_road")


def vehicle(vid: int, route: str, s: float, v: float, kind: Kind = Kind.CAV, **kw) -> VehicleState:
    return VehicleState(vid, kind, route, s, v, **kw)


def scene_of(*vehicles: VehicleState, time: float = 0.0) -> SceneState:
    return SceneState(time, list(vehicles))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.REPORT):
            terminalreporter.write_line(line)
