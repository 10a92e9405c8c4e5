"""Command-line entry point.

Exit codes:

0  success (defense satisfied, policy written, run completed)
1  error: malformed config, invalid input, I/O failure
2  ``check-defense``: some scheduled topology violates the defense condition
3  ``synthesize``: no attacked topology admits a feasible zero
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .graph import defense_verdict
from .linalg import InvalidInputError
from .observability import classify_detectability
from .scenario import Scenario, bundled_dir, load
from .sim import twin_run, write_csv
from .zda import feasibility_check, feasibility_plan

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSATISFIED = 2
EXIT_RESISTANT = 3


def _load(args) -> Scenario:
    path = Path(args.config)
    if not path.exists() and (bundled_dir() / f"{args.config}.json").exists():
        path = bundled_dir() / f"{args.config}.json"
    scen = load(path)
    overrides = {"seed": args.seed, "dt": args.dt, "horizon": args.horizon,
                 "threshold": args.threshold}
    if any(v is not None for v in overrides.values()):
        scen = scen.with_overrides(**overrides)
    return scen


def _out_dir(args, scen: Scenario) -> Path:
    out = Path(args.out if args.out is not None else scen.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, rec) -> None:
    path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")


def cmd_check_defense(args) -> int:
    scen = _load(args)
    monitored = scen.outputs.monitored
    verdicts = [defense_verdict(scen.topologies[r], monitored) for r in scen.schedule.topology_ids]
    for v in verdicts:
        state = "satisfied" if v.satisfied else "unsatisfied"
        extra = " (near threshold)" if v.uncertain else ""
        print(f"topology {v.topology_id}: distinct_eigs={v.distinct_eigs} "
              f"witnesses={list(v.witness_agents)} -> {state}{extra}")
    ok = all(v.satisfied for v in verdicts)
    print("overall:", "satisfied" if ok else "unsatisfied")
    if args.out is not None:
        _write_json(_out_dir(args, scen) / f"{scen.prefix}_defense.json",
                    {"satisfied": ok, "topologies": [v.to_record() for v in verdicts]})
    return EXIT_OK if ok else EXIT_UNSATISFIED


def _feasibility(scen: Scenario, policy) -> dict[str, bool]:
    isched = scen.intermittent_schedule()
    intervals = scen.schedule.intervals(scen.horizon)
    out = {}
    for r, entry in policy.entries.items():
        k = next((k for k, (rr, _, _) in enumerate(intervals) if rr == r), None)
        if k is None:
            out[r] = False
            continue
        plan = feasibility_plan(scen.system, isched, scen.horizon, k)
        out[r] = bool(feasibility_check(entry.z0, plan, scen.system.C))
    return out


def cmd_synthesize(args) -> int:
    scen = _load(args)
    if not scen.attacker.misbehaving:
        print("no misbehaving agents: attack-resistant")
        return EXIT_RESISTANT
    policy, reasons = scen.attack_policy()
    feasible = _feasibility(scen, policy)
    for r in scen.attacked:
        if r in policy.entries:
            e = policy.entries[r]
            state = "feasible" if feasible[r] else "infeasible under switching"
            print(f"topology {r}: eta={e.eta:.6g} support={list(e.support())} -> {state}")
        else:
            print(f"topology {r}: {reasons.get(r, 'no zero')}")
    rec = {
        "policy": policy.to_record(),
        "feasible": feasible,
        "reasons": reasons,
        "intermittent_schedule": scen.intermittent_schedule().to_record(),
    }
    if not any(feasible.values()):
        print("no feasible zero on any attacked topology: attack-resistant")
        return EXIT_RESISTANT
    path = _out_dir(args, scen) / f"{scen.prefix}_policy.json"
    _write_json(path, rec)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scen = _load(args)
    result = twin_run(scen)
    out = _out_dir(args, scen)
    csv_path = out / f"{scen.prefix}_trajectory.csv"
    write_csv(csv_path, result)
    rec = result.verdict.to_record()
    rec["flags"] = result.attacked.flags
    if result.plan is not None:
        rec["skipped_windows"] = result.plan.skipped
    _write_json(out / f"{scen.prefix}_verdict.json", rec)
    state = (f"detected at t={result.verdict.first_detection_time:.6g}"
             if result.verdict.detected else "not detected")
    print(f"{state}; peak residual {result.verdict.peak_residual:.3e}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_classify(args) -> int:
    scen = _load(args)
    report = classify_detectability(scen.outputs, scen.attacker, scen.topologies, scen.schedule,
                                    D=scen.system.D)
    rec = report.to_record()
    print(json.dumps(rec, indent=2, sort_keys=True))
    if args.out is not None:
        _write_json(_out_dir(args, scen) / f"{scen.prefix}_classify.json", rec)
    return EXIT_OK


SWEEP_COLUMNS = ("inference_delay", "pause_lead", "threshold", "dt", "detected",
                 "first_detection_time", "peak_residual", "skipped_windows", "error")


def _sweep_point(scen: Scenario, point: dict) -> dict:
    defaults = {"inference_delay": scen.attacker.inference_delay,
                "pause_lead": scen.attacker.pause_lead, "threshold": scen.threshold, "dt": scen.dt}
    row = {k: point.get(k, v) for k, v in defaults.items()}
    try:
        result = twin_run(scen.with_overrides(**point))
    except InvalidInputError as exc:
        row.update(detected="", first_detection_time="", peak_residual="", skipped_windows="",
                   error=str(exc))
        return row
    v = result.verdict
    row.update(detected=v.detected, first_detection_time="" if v.first_detection_time is None
               else v.first_detection_time, peak_residual=v.peak_residual,
               skipped_windows=len(result.plan.skipped) if result.plan else 0, error="")
    return row


def cmd_sweep(args) -> int:
    scen = _load(args)
    grid = scen.sweep or {"inference_delay": [scen.attacker.inference_delay]}
    keys = sorted(grid)
    points = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda p: _sweep_point(scen, p), points))
    path = _out_dir(args, scen) / f"{scen.prefix}_sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    print(f"{'delta_inf':>9} {'delta_pause':>11} {'threshold':>9} {'detected':>8} {'peak':>10}")
    for r in rows:
        peak = f"{r['peak_residual']:.3e}" if r["error"] == "" else "error"
        print(f"{r['inference_delay']:>9g} {r['pause_lead']:>11g} {r['threshold']:>9g} "
              f"{str(r['detected']):>8} {peak:>10}")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "check-defense": (cmd_check_defense, "check the defense condition on every scheduled topology"),
    "synthesize": (cmd_synthesize, "synthesize a zero-dynamics attack policy"),
    "simulate": (cmd_simulate, "run the reference/attacked twin simulation"),
    "classify": (cmd_classify, "report guaranteed detectability of the intermittent attack"),
    "sweep": (cmd_sweep, "grid over attacker delays and detection thresholds"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zdaswitch", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="scenario JSON file, or the name of a bundled scenario")
        p.add_argument("--out", help="output directory (default: the config's output.dir)")
        p.add_argument("--seed", type=int, help="seed for generated topologies")
        p.add_argument("--dt", type=float, help="output sample spacing")
        p.add_argument("--horizon", type=float, help="simulated duration")
        p.add_argument("--threshold", type=float, help="residual detection threshold")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=4, help="concurrent runs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_ERROR
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR
