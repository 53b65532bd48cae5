"""Efficiency and criticality metrics of a simulation run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

CRITICAL_PET = 1.0  # s


@dataclass(frozen=True)
class Occupancy:
    """One vehicle's stay in one conflict zone (front-in to rear-out)."""

    zone_id: str
    approach: int
    vehicle_id: int
    t_enter: float
    t_exit: float = math.inf  # still inside at the end of the log


@dataclass
class PetResult:
    values: list[float] = field(default_factory=list)
    collisions: int = 0


def _default_conflicting(zone_id: str, a: int, b: int) -> bool:
    return a != b


def _sort_key(e: Occupancy):
    return (e.t_enter, e.vehicle_id, e.t_exit)


def compute_pet(events: Iterable[Occupancy],
                conflicting: Callable[[str, int, int], bool] = _default_conflicting) -> PetResult:
    """Post-encroachment times between consecutive occupancies of each zone.

    Consecutive means adjacent in (t_enter, vehicle_id, t_exit) order. Pairs
    from conflicting approaches give enter(second) - exit(first); an overlap
    counts as a collision instead.
    """
    by_zone: dict[str, list[Occupancy]] = {}
    for e in events:
        by_zone.setdefault(e.zone_id, []).append(e)
    out = PetResult()
    for zid in sorted(by_zone):
        evs = sorted(by_zone[zid], key=_sort_key)
        for first, second in zip(evs, evs[1:]):
            if not conflicting(zid, first.approach, second.approach):
                continue
            if second.t_enter >= first.t_exit:
                out.values.append(second.t_enter - first.t_exit)
            else:
                out.collisions += 1
    return out


def compute_pet_bruteforce(events: list[Occupancy],
                           conflicting: Callable[[str, int, int], bool] = _default_conflicting) -> PetResult:
    """Quadratic reference: find each occupancy's immediate predecessor by scanning."""
    out = PetResult()
    events = list(events)
    for e in sorted(events, key=lambda x: (x.zone_id, _sort_key(x))):
        pred = None
        for c in events:
            if c.zone_id == e.zone_id and _sort_key(c) < _sort_key(e):
                if pred is None or _sort_key(c) > _sort_key(pred):
                    pred = c
        if pred is None or not conflicting(e.zone_id, pred.approach, e.approach):
            continue
        if e.t_enter >= pred.t_exit:
            out.values.append(e.t_enter - pred.t_exit)
        else:
            out.collisions += 1
    return out


@dataclass
class RunMetrics:
    mean_wait: float = 0.0  # s
    throughput: float = 0.0  # vehicles / h
    stop_rate: float = 0.0
    pet_values: list[float] = field(default_factory=list)
    critical_pet_rate: float = 0.0
    max_cycle_ms: float = 0.0
    p97_cycle_ms: float = 0.0
    collisions: int = 0
    empty: bool = False

    @property
    def n_critical(self) -> int:
        return sum(1 for p in self.pet_values if p < CRITICAL_PET)


@dataclass
class SimulationLog:
    vehicles: list  # final VehicleState per slot, pending ones included
    occupancies: list[Occupancy] = field(default_factory=list)
    cycle_runtimes: list[float] = field(default_factory=list)  # s
    conflicting: Callable[[str, int, int], bool] = _default_conflicting


def compute_run_metrics(log: SimulationLog, duration: float) -> RunMetrics:
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not log.vehicles:
        return RunMetrics(empty=True)
    waits = [v.wait_accum for v in log.vehicles]
    crossings = sum(v.crossings for v in log.vehicles)
    passes = sum(v.passes for v in log.vehicles)
    stopped = sum(v.stopped_passes for v in log.vehicles)
    pet = compute_pet(log.occupancies, log.conflicting)
    rt = np.asarray(log.cycle_runtimes, dtype=float) * 1000.0
    return RunMetrics(
        mean_wait=float(np.mean(waits)),
        throughput=crossings / duration * 3600.0,
        stop_rate=stopped / passes if passes else 0.0,
        pet_values=pet.values,
        critical_pet_rate=(sum(1 for p in pet.values if p < CRITICAL_PET) / len(pet.values)) if pet.values else 0.0,
        max_cycle_ms=float(rt.max()) if rt.size else 0.0,
        p97_cycle_ms=float(np.percentile(rt, 97)) if rt.size else 0.0,
        collisions=pet.collisions,
    )
