"""Command-line interface.

Subcommands: generate, solve-dp, simulate, opi, benchmark, report,
indices, verify.  All randomness is seeded; --budget-mode step-count
makes opi and benchmark runs exactly reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dp import policy_iteration, reward_optimum
from .experiments import (
    ExperimentConfig,
    aggregate_records,
    read_records_csv,
    records_csv_text,
    render_tables,
    run_benchmark,
    write_aggregate_csv,
)
from .fixtures import verify_all
from .index_policy import IndexPolicy, ModifiedIndexPolicy, index_table
from .instance import (
    STREAM_CRN,
    STREAM_OPI_OFFLINE,
    STREAM_OPI_ONLINE,
    CostKind,
    generate_instance,
    load_instance,
    save_instance,
)
from .mdp import SystemState, pristine_state, simulate
from .opi import (
    STEP_COUNT,
    WALL_CLOCK,
    OpiBudget,
    desk_scale_budget,
    load_store,
    full_scale_budget,
    run_opi,
    save_store,
)
from .polling import PollingPolicy, best_tour


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream))))


def _parse_state(text: str) -> SystemState:
    loc, _, conds = text.partition(":")
    return SystemState(int(loc), tuple(int(c) for c in conds.split(",")))


def _budget_from_args(args) -> OpiBudget:
    budget = full_scale_budget() if args.paper_scale else desk_scale_budget()
    if args.budget_mode:
        mode = STEP_COUNT if args.budget_mode == "step-count" else WALL_CLOCK
        budget.mode = mode
    for name in ("r1", "r2", "r_off", "tau_max", "r_on", "delta"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(budget, name, value)
    return budget


def cmd_generate(args) -> int:
    kind = CostKind(args.cost_kind) if args.cost_kind else None
    out = Path(args.out)
    if args.count > 1:
        out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        inst = generate_instance(args.seed + i, m=args.m, cap=args.cap, cost_kind=kind)
        path = out / f"instance-{args.seed + i}.json" if args.count > 1 else out
        save_instance(inst, path)
        print(f"wrote {path} (m={inst.machine_count}, K={inst.cap[0]}, "
              f"rho={inst.rho:.3f}, eta={inst.eta:.3f})")
    return 0


def cmd_solve_dp(args) -> int:
    inst = load_instance(args.instance)
    solution = policy_iteration(inst, tol=args.tol)
    u_star = reward_optimum(inst, solution)
    print(f"g* = {solution.g_star:.9f}")
    print(f"u* = {u_star:.9f}")
    print(f"policy-iteration rounds: {solution.iterations}")
    if args.out:
        table = {
            f"{s.location}:{','.join(map(str, s.conditions))}": a
            for s, a in solution.policy_table(inst).items()
        }
        payload = {"g_star": solution.g_star, "u_star": u_star, "policy": table}
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def _policy_for(name: str, inst):
    if name == "index":
        return IndexPolicy(inst)
    if name == "modified-index":
        return ModifiedIndexPolicy(inst)
    raise ValueError(f"unknown policy {name!r}")


def cmd_simulate(args) -> int:
    inst = load_instance(args.instance)
    x0 = _parse_state(args.start) if args.start else pristine_state(inst)
    crn = _rng(args.seed, STREAM_CRN).random(args.steps)
    if args.policy == "polling":
        tour = best_tour(inst.layout, inst.layout.machines if not args.subset
                         else [int(x) for x in args.subset.split(",")])
        policy = PollingPolicy(inst, tour)
        print(f"tour: {tour.sequence} (cycle length {tour.cycle_length})")
    else:
        policy = _policy_for(args.policy, inst)
    report = simulate(inst, policy, x0, args.steps, crn=crn)
    print(report.to_json())
    return 0


def cmd_opi(args) -> int:
    inst = load_instance(args.instance)
    budget = _budget_from_args(args)
    base = ModifiedIndexPolicy(inst)
    store = load_store(args.import_store) if args.import_store else None
    x0 = _parse_state(args.start) if args.start else pristine_state(inst)
    crn = _rng(args.seed, STREAM_CRN).random(budget.r_on)
    result = run_opi(
        inst,
        base,
        budget,
        offline_rng=_rng(args.seed, STREAM_OPI_OFFLINE),
        online_rng=_rng(args.seed, STREAM_OPI_ONLINE),
        x0=x0,
        crn=crn,
        store=store,
    )
    print(result.report.to_json())
    if args.export_store:
        save_store(result.store, args.export_store)
        print(f"wrote {args.export_store}")
    return 0


def cmd_benchmark(args) -> int:
    budget = _budget_from_args(args)
    config = ExperimentConfig(
        seed=args.seed,
        count=args.count,
        instance_files=tuple(args.instances or ()),
        m=args.m,
        cap=args.cap,
        cost_kind=CostKind(args.cost_kind) if args.cost_kind else None,
        steps=args.steps,
        budget=budget,
        run_dp=not args.no_dp,
        jobs=args.jobs,
    )
    records = run_benchmark(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").write_text(records_csv_text(records), encoding="utf-8")
    for dimension in ("m", "rho", "eta", "cost_kind", "K"):
        rows = aggregate_records(records, dimension)
        with open(out / f"aggregate_{dimension}.csv", "w", encoding="utf-8", newline="") as fh:
            write_aggregate_csv(rows, fh)
    tables = render_tables(records)
    (out / "tables.txt").write_text(tables, encoding="utf-8")
    print(tables)
    failures = sum(1 for r in records if r.error is not None)
    print(f"wrote {out}/records.csv and aggregates")
    return 1 if failures else 0


def cmd_report(args) -> int:
    with open(args.records, "r", encoding="utf-8") as fh:
        records = read_records_csv(fh)
    if not records:
        print("no records found", file=sys.stderr)
        return 1
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for dimension in ("m", "rho", "eta", "cost_kind", "K"):
            rows = aggregate_records(records, dimension)
            with open(out / f"aggregate_{dimension}.csv", "w", encoding="utf-8", newline="") as fh:
                write_aggregate_csv(rows, fh)
    print(render_tables(records))
    return 0


def cmd_indices(args) -> int:
    inst = load_instance(args.instance)
    state = _parse_state(args.state)
    print(json.dumps(index_table(inst, state), indent=2))
    return 0


def cmd_verify(args) -> int:
    outcomes = verify_all(tol=args.tol)
    failed = False
    for outcome in outcomes:
        status = "PASS" if outcome.passed else "FAIL"
        print(f"[{status}] {outcome.name}")
        for line in outcome.details:
            print(f"    {line}")
        failed = failed or not outcome.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repairnet",
        description="Repair-and-maintenance scheduling on networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate random instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--m", type=int)
    p.add_argument("--cap", type=int, help="shared degradation cap K")
    p.add_argument("--cost-kind", choices=[k.value for k in CostKind])
    p.add_argument("--out", required=True, help="output file (count=1) or directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve-dp", help="exact policy iteration")
    p.add_argument("--instance", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", help="write the policy table as JSON")
    p.set_defaults(func=cmd_solve_dp)

    p = sub.add_parser("simulate", help="simulate one policy")
    p.add_argument("--instance", required=True)
    p.add_argument("--policy", choices=["index", "modified-index", "polling"], default="index")
    p.add_argument("--subset", help="polling subset as comma-separated machine ids")
    p.add_argument("--steps", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", help="initial state as 'loc:x1,x2,...'")
    p.set_defaults(func=cmd_simulate)

    def add_budget_args(p):
        p.add_argument("--budget-mode", choices=["step-count", "wall-clock"])
        p.add_argument("--paper-scale", action="store_true",
                       help="use the full-scale wall-clock budgets")
        p.add_argument("--r1", type=int)
        p.add_argument("--r2", type=int)
        p.add_argument("--r-off", dest="r_off", type=int)
        p.add_argument("--tau-max", dest="tau_max", type=float)
        p.add_argument("--r-on", dest="r_on", type=int)
        p.add_argument("--delta", type=float)

    p = sub.add_parser("opi", help="offline estimation plus online improvement run")
    p.add_argument("--instance", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", help="initial state as 'loc:x1,x2,...'")
    p.add_argument("--import-store")
    p.add_argument("--export-store")
    add_budget_args(p)
    p.set_defaults(func=cmd_opi)

    p = sub.add_parser("benchmark", help="compare policies over an instance batch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--instances", nargs="*", help="instance files instead of generation")
    p.add_argument("--m", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--cost-kind", choices=[k.value for k in CostKind])
    p.add_argument("--steps", type=int, default=50_000)
    p.add_argument("--no-dp", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    add_budget_args(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="re-aggregate a records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("indices", help="dump the index table for one state")
    p.add_argument("--instance", required=True)
    p.add_argument("--state", required=True, help="state as 'loc:x1,x2,...'")
    p.set_defaults(func=cmd_indices)

    p = sub.add_parser("verify", help="run the golden fixtures")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
