"""Command-line interface.

    bpsmooth run --config CFG [--seed N] [--trials N] [--out PATH]
    bpsmooth solve --instance PATH [--oracle]
    bpsmooth check-lemmas --config CFG [--seed N] [--trials N]
    bpsmooth report --records CSV --out-dir DIR [--fit-min A --fit-max B]

Exit codes: 0 success, 1 usage/config error, 2 acceptance-check failure
(a bound or deterministic consequence that should hold empirically failed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from bpsmooth import bp, experiments
from bpsmooth.experiments import ConfigError, parse_config
from bpsmooth.instances import (
    BipartiteInstance,
    FlowNetwork,
    InstanceError,
    load_instance,
)
from bpsmooth.oracles import (
    EnumerationCapError,
    cheapest_residual_cycle,
    flow_gap_enumeration,
    matching_gap,
    min_cost_flow,
    mwm,
)


def _load_config(args) -> experiments.ExperimentConfig:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
    return cfg


def _summary_ok(summary: dict) -> bool:
    if summary.get("violations", 0) > 0:
        return False
    if summary.get("cycle_below_gap_violations", 0) > 0:
        return False
    for key in ("within_4_sigma", "above_lower_bound"):
        if key in summary and not summary[key]:
            return False
    for bound in summary.get("bounds", []):
        if not bound["holds"]:
            return False
    return True


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    _, summary = experiments.run_experiment(cfg)
    print(json.dumps(summary, indent=2))
    if cfg.out:
        print(f"records written to {cfg.out}", file=sys.stderr)
    return 0 if _summary_ok(summary) else 2


def _cmd_check_lemmas(args) -> int:
    cfg = _load_config(args)
    summary = experiments.lemma_checks(cfg)
    print(json.dumps(summary, indent=2))
    return 0 if summary.get("violations", 0) == 0 else 2


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if isinstance(inst, BipartiteInstance):
        result = bp.run(inst, t_max=args.t_max, window=args.window,
                        mode=args.mode)
        print(f"converged: {result.converged}")
        print(f"tau: {result.tau if result.tau is not None else 'censored'}")
        assign = " ".join(
            f"u{i + 1}->v{j + 1}" if j is not None else f"u{i + 1}->."
            for i, j in enumerate(result.final_assignment))
        print(f"assignment: {assign}")
        print(f"is_matching: {result.is_matching}")
        if result.tie_detected:
            print("warning: belief tie within 1e-12 observed", file=sys.stderr)
        if args.oracle:
            best = mwm(inst)
            print(f"optimal_weight: {best.weight!r}")
            print("optimal_pairs: " + " ".join(
                f"u{i + 1}->v{j + 1}" for i, j in sorted(best.pairs)))
            decoded = {(i, j) for i, j in enumerate(result.final_assignment)
                       if j is not None}
            print(f"matches_oracle: {decoded == set(best.pairs)}")
            try:
                rep = matching_gap(inst)
                print(f"gap_delta: {rep.delta!r}")
            except EnumerationCapError:
                print("gap_delta: skipped (instance too large to enumerate)")
        return 0
    assert isinstance(inst, FlowNetwork)
    flow = min_cost_flow(inst)
    cost = flow.cost(inst)
    print(f"min_cost: {cost!r}")
    print("flow: " + " ".join(str(v) for v in flow.values))
    cycle = cheapest_residual_cycle(inst, flow)
    print(f"cycle_gap: {cycle!r}" if cycle is not None else "cycle_gap: none")
    if args.oracle:
        try:
            rep = flow_gap_enumeration(inst)
            print(f"gap_delta: {rep.delta!r}")
            if rep.delta is not None and cycle is not None:
                print(f"cycle_ge_gap: {cycle >= rep.delta - 1e-9}")
        except EnumerationCapError:
            print("gap_delta: skipped (too many flow vectors)")
    return 0


def _cmd_report(args) -> int:
    records = experiments.read_records_csv(args.records)
    fit_range = None
    if args.fit_min is not None and args.fit_max is not None:
        fit_range = (args.fit_min, args.fit_max)
    written = experiments_report(records, args.out_dir, fit_range)
    for path in written:
        print(path)
    return 0


def experiments_report(records, out_dir, fit_range):
    from bpsmooth.report import render_report
    return render_report(records, out_dir, fit_range=fit_range)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpsmooth",
        description="BP matching engine, exact oracles, and Monte Carlo "
                    "tail experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--trials", type=int)
    run_p.add_argument("--out")
    run_p.set_defaults(func=_cmd_run)

    solve_p = sub.add_parser("solve", help="solve one instance file")
    solve_p.add_argument("--instance", required=True)
    solve_p.add_argument("--oracle", action="store_true",
                         help="also run the exact oracles and compare")
    solve_p.add_argument("--t-max", type=int, default=100000)
    solve_p.add_argument("--window", type=int, default=4)
    solve_p.add_argument("--mode", choices=("raw", "normalized"),
                         default="normalized")
    solve_p.set_defaults(func=_cmd_solve)

    check_p = sub.add_parser("check-lemmas",
                             help="run deterministic consequence checks")
    check_p.add_argument("--config", required=True)
    check_p.add_argument("--seed", type=int)
    check_p.add_argument("--trials", type=int)
    check_p.set_defaults(func=_cmd_check_lemmas)

    rep_p = sub.add_parser("report",
                           help="render figures and summaries from records")
    rep_p.add_argument("--records", required=True)
    rep_p.add_argument("--out-dir", required=True)
    rep_p.add_argument("--fit-min", type=float)
    rep_p.add_argument("--fit-max", type=float)
    rep_p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InstanceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
