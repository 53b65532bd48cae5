"""Command-line entry point: ``coopmaneuver <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import harness as H
from .map_model import FIXTURES, load_fixture
from .metrics import CRITICAL_PET, Occupancy, compute_pet, compute_pet_bruteforce
from .planner import Method


def _occupancy_doc(o: Occupancy) -> dict:
    return {"zone_id": o.zone_id, "approach": o.approach, "vehicle_id": o.vehicle_id,
            "t_enter": o.t_enter, "t_exit": None if math.isinf(o.t_exit) else o.t_exit}


def _occupancy_from(d: dict) -> Occupancy:
    t_exit = math.inf if d["t_exit"] is None else d["t_exit"]
    return Occupancy(d["zone_id"], int(d["approach"]), int(d["vehicle_id"]), float(d["t_enter"]), float(t_exit))


def cmd_simulate(args) -> int:
    spec = H.ScenarioSpec(args.map, args.seed, args.vehicles, args.cav_pct, args.duration, Method(args.method.upper()))
    model = H.MlpModel.load(args.model) if args.model else None
    result = H.run_scenario(spec, urgency_model=model)
    for key in H.CSV_COLUMNS:
        print(f"{key:28s} {H.format_value(result.row[key])}")
    if args.out:
        doc = {
            "spec": H.spec_to_dict(spec),
            "row": result.row,
            "occupancies": [_occupancy_doc(o) for o in result.log.occupancies],
        }
        Path(args.out).write_text(json.dumps(doc, indent=1))
        print(f"log written to {args.out}")
    return 0


def cmd_train_heur(args) -> int:
    def progress(done, total, n):
        print(f"  run {done}/{total}: {n} samples", file=sys.stderr)

    if args.dataset and Path(args.dataset).exists():
        dataset = H.PairDataset.load(args.dataset)
        print(f"loaded {len(dataset)} samples from {args.dataset}")
    else:
        dataset = H.generate_heur_dataset(args.runs, args.run_length, args.seed, progress=progress)
        print(f"generated {len(dataset)} samples from {args.runs} runs")
        if args.dataset:
            dataset.save(args.dataset)
    model, report = H.train_heur(dataset, epochs=args.epochs, seed=args.seed)
    Path(args.out_model).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out_model)
    print(f"train={report.n_train} test={report.n_test} final_loss={report.final_loss:.4f} "
          f"holdout_sign_accuracy={report.holdout_sign_accuracy:.4f}")
    print(f"model written to {args.out_model}")
    return 0


def cmd_sweep(args) -> int:
    config = H.SweepConfig.load(args.config)
    if args.workers:
        config.workers = args.workers

    def progress(done, total):
        if done % 10 == 0 or done == total:
            print(f"  {done}/{total} runs", file=sys.stderr)

    report = H.run_experiment(config, args.out_dir, progress)
    print(f"{len(report.rows)} runs, {report.failures} failures; results in {args.out_dir}")
    for c in report.cells:
        print(f"  {c['map']:18s} {c['method']:5s} {c['cav_pct']:3d}%  wait {c['mean_wait_s']:6.2f} s "
              f"(x{c['mean_wait_s_ratio']:.2f})  thr {c['throughput_per_h']:7.1f} /h (x{c['throughput_per_h_ratio']:.2f})")
    return 1 if report.failures else 0


def cmd_pet_check(args) -> int:
    doc = json.loads(Path(args.log).read_text())
    events = [_occupancy_from(d) for d in doc["occupancies"]]
    network = load_fixture(doc["spec"]["map"])
    conflicting = H._zone_conflicting(network)
    fast = compute_pet(events, conflicting)
    slow = compute_pet_bruteforce(events, conflicting)
    same = sorted(fast.values) == sorted(slow.values) and fast.collisions == slow.collisions
    n_crit = sum(1 for p in fast.values if p < CRITICAL_PET)
    rate = n_crit / len(fast.values) if fast.values else 0.0
    print(f"{len(events)} occupancies, {len(fast.values)} PET values, {n_crit} critical "
          f"(rate {rate:.4f}), {fast.collisions} collisions")
    print("brute-force check: " + ("match" if same else "MISMATCH"))
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopmaneuver", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario and print its metrics")
    s.add_argument("--map", default="main_road", choices=sorted(FIXTURES))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", default="NONE", type=str.upper, choices=[m.value for m in Method])
    s.add_argument("--cav-pct", type=int, default=100)
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--vehicles", type=int, default=H.MAX_VEHICLES)
    s.add_argument("--model", help="urgency model for HEUR (default: bundled model)")
    s.add_argument("--out", help="write spec, metrics and zone occupancies as JSON")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train-heur", help="generate pairwise labels and train the urgency model")
    t.add_argument("--runs", type=int, default=200)
    t.add_argument("--run-length", type=float, default=120.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--dataset", help="reuse (or save) the labelled dataset at this .npz path")
    t.add_argument("--out-model", default=str(H.DEFAULT_MODEL))
    t.set_defaults(func=cmd_train_heur)

    w = sub.add_parser("sweep", help="run a scenario x method x percentage sweep")
    w.add_argument("--config", required=True, help="JSON sweep configuration")
    w.add_argument("--out-dir", required=True)
    w.add_argument("--workers", type=int, default=0, help="override the config's worker count")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("pet-check", help="recompute PET from a simulate log and cross-check it")
    c.add_argument("--log", required=True)
    c.set_defaults(func=cmd_pet_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, H.PlacementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
