"""Batch command-line front-end.

Subcommands:
  run                one scheduler over all loops; summary JSON + per-loop CSVs
  sweep-lambda       quality/variance tradeoff table across lambda values
  compare-schedulers matched-seed comparison table across schedulers
  mlp                PSNR traces along most-likely navigation paths
  verify             differential check of the solver against the
                     brute-force oracle on random instances

All artifacts are deterministic: same command line + same files produce
byte-identical output (no timestamps, stable orderings).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from typing import Optional, Sequence

from .engine import (
    SCHEDULER_KINDS,
    World,
    mean_over_loops,
    mlp_trace,
    run_loops,
    run_session,
    sweep_lambda,
)
from .oracle import exhaustive_opportunity
from .randinst import random_instance
from .rdmodel import psnr
from .scenario import BadConfig, ScenarioConfig, load_scenario, scenario_to_dict
from .trellis import PolicyViolation, SolverGuardExceeded, solve_opportunity

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _apply_overrides(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    if getattr(args, "lam", None) is not None:
        config = replace(config, lam=args.lam)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "loops", None) is not None:
        config = replace(config, loops=args.loops)
    return config


def _loop_rows(result) -> list[list]:
    rows = []
    for t, row in enumerate(result.distortion):
        for m, d in enumerate(row):
            rows.append(
                [t, m, result.popularity[t][m], d, psnr(d), result.delivered[t][m]]
            )
    return rows


LOOP_CSV_HEADER = ["t", "m", "popularity", "distortion", "psnr_db", "delivered"]


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_scenario(args.scenario), args)
    os.makedirs(args.out, exist_ok=True)
    results = run_loops(config, args.scheduler, workers=args.workers)
    for res in results:
        _write_csv(
            os.path.join(args.out, f"loop_{res.loop_index:03d}.csv"),
            LOOP_CSV_HEADER,
            _loop_rows(res),
        )
        if args.log_schedule:
            rows = [
                [entry["tau"], entry["capacity"], entry["cost"],
                 json.dumps(entry["units"], separators=(",", ":"))]
                for entry in res.schedule_log
            ]
            _write_csv(
                os.path.join(args.out, f"schedule_{res.loop_index:03d}.csv"),
                ["tau", "capacity", "cost", "units"],
                rows,
            )
    mean_q, mean_v = mean_over_loops(results)
    summary = {
        "scenario": scenario_to_dict(config),
        "scheduler": args.scheduler,
        "loops": len(results),
        "mean_psnr_db": mean_q,
        "mean_weighted_variance": mean_v,
        "per_loop": [
            {
                "loop": r.loop_index,
                "mean_psnr_db": r.mean_psnr,
                "mean_weighted_variance": r.mean_weighted_variance,
            }
            for r in results
        ],
    }
    _write_json(os.path.join(args.out, "summary.json"), summary)
    print(
        f"{args.scheduler}: {len(results)} loops, "
        f"mean PSNR {mean_q:.3f} dB, mean weighted variance {mean_v:.4f}"
    )
    return EXIT_OK


def cmd_sweep_lambda(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_scenario(args.scenario), args)
    lambdas = [float(v) for v in args.lambdas.split(",")]
    rows = sweep_lambda(config, lambdas, args.scheduler, workers=args.workers)
    _write_csv(
        args.out,
        ["lambda", "scheduler", "loops", "mean_psnr_db", "mean_weighted_variance"],
        [
            [r["lambda"], r["scheduler"], r["loops"], r["mean_psnr_db"], r["mean_weighted_variance"]]
            for r in rows
        ],
    )
    for r in rows:
        print(
            f"lambda={r['lambda']}: mean PSNR {r['mean_psnr_db']:.3f} dB, "
            f"variance {r['mean_weighted_variance']:.4f}"
        )
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_scenario(args.scenario), args)
    kinds = args.schedulers.split(",") if args.schedulers else list(SCHEDULER_KINDS)
    rows = []
    for kind in kinds:
        results = run_loops(config, kind, workers=args.workers)
        mean_q, mean_v = mean_over_loops(results)
        rows.append([kind, len(results), mean_q, mean_v])
        print(f"{kind}: mean PSNR {mean_q:.3f} dB, variance {mean_v:.4f}")
    _write_csv(
        args.out,
        ["scheduler", "loops", "mean_psnr_db", "mean_weighted_variance"],
        rows,
    )
    return EXIT_OK


def cmd_mlp(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_scenario(args.scenario), args)
    world = World(config)
    result = run_session(world, args.scheduler, args.loop)
    views = (
        [int(v) for v in args.start_views.split(",")]
        if args.start_views
        else list(range(config.timeline.cameras))
    )
    rows = []
    for view in views:
        trace, mean_trace = mlp_trace(result, config, view)
        for step, value in enumerate(trace):
            rows.append([view, step, value, mean_trace, result.mean_psnr])
        print(
            f"start view {view}: MLP mean {mean_trace:.3f} dB "
            f"(session mean {result.mean_psnr:.3f} dB)"
        )
    _write_csv(
        args.out,
        ["start_view", "t", "psnr_db", "mlp_mean_psnr_db", "session_mean_psnr_db"],
        rows,
    )
    return EXIT_OK


def verify_report(
    instances: int,
    seed: int,
    lambdas: Sequence[float],
    max_units: int = 12,
) -> dict:
    """Differential solver-vs-oracle report over random instances."""
    report: dict = {"instances": instances, "seed": seed, "lambdas": {}}
    for lam in lambdas:
        mismatches = []
        gaps = []
        for i in range(instances):
            inst = random_instance(seed * 1_000_000 + i, lam=lam, max_units=max_units)
            got = solve_opportunity(*inst.solver_args())
            want = exhaustive_opportunity(*inst.solver_args())
            if lam == 0.0:
                if got.objective_value != want.objective_value:
                    mismatches.append(
                        {
                            "instance": i,
                            "solver": got.objective_value,
                            "oracle": want.objective_value,
                        }
                    )
            gap = got.objective_value - want.objective_value
            rel = gap / want.objective_value if want.objective_value > 0 else 0.0
            gaps.append(rel)
        report["lambdas"][repr(lam)] = {
            "mismatches": mismatches,
            "max_relative_gap": max(gaps),
            "mean_relative_gap": math.fsum(gaps) / len(gaps),
        }
    return report


def cmd_verify(args: argparse.Namespace) -> int:
    lambdas = [float(v) for v in args.lambdas.split(",")]
    started = time.perf_counter()
    report = verify_report(args.instances, args.seed, lambdas, args.max_units)
    elapsed = time.perf_counter() - started
    failed = False
    for lam in lambdas:
        entry = report["lambdas"][repr(lam)]
        n_bad = len(entry["mismatches"])
        print(
            f"lambda={lam}: {args.instances} instances, "
            f"{n_bad} exact mismatches, "
            f"max gap {entry['max_relative_gap']:.3e}, "
            f"mean gap {entry['mean_relative_gap']:.3e}"
        )
        if lam == 0.0 and n_bad:
            failed = True
    print(f"verified in {elapsed:.1f}s")
    if args.out:
        _write_json(args.out, report)
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvsched",
        description="Multiview packet-scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="override the scenario's smoothness weight")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--loops", type=int, default=None, help="override the loop count")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel loop workers (default: MVSCHED_THREADS or cpu count)")

    p_run = sub.add_parser("run", help="run one scheduler over all loops")
    add_common(p_run)
    p_run.add_argument("--scheduler", choices=SCHEDULER_KINDS, default="trellis")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--log-schedule", action="store_true",
                       help="also write per-opportunity schedule CSVs")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep-lambda", help="lambda tradeoff table")
    add_common(p_sweep)
    p_sweep.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p_sweep.add_argument("--scheduler", choices=SCHEDULER_KINDS, default="trellis")
    p_sweep.add_argument("--out", required=True, help="output CSV file")
    p_sweep.set_defaults(func=cmd_sweep_lambda)

    p_cmp = sub.add_parser("compare-schedulers", help="matched-seed scheduler comparison")
    add_common(p_cmp)
    p_cmp.add_argument("--schedulers", default=None,
                       help="comma-separated scheduler kinds (default: all)")
    p_cmp.add_argument("--out", required=True, help="output CSV file")
    p_cmp.set_defaults(func=cmd_compare)

    p_mlp = sub.add_parser("mlp", help="PSNR along most-likely navigation paths")
    add_common(p_mlp)
    p_mlp.add_argument("--scheduler", choices=SCHEDULER_KINDS, default="trellis")
    p_mlp.add_argument("--loop", type=int, default=0, help="loop index to trace")
    p_mlp.add_argument("--start-views", default=None,
                       help="comma-separated start views (default: all)")
    p_mlp.add_argument("--out", required=True, help="output CSV file")
    p_mlp.set_defaults(func=cmd_mlp)

    p_ver = sub.add_parser("verify", help="differential solver-vs-oracle check")
    p_ver.add_argument("--instances", type=int, default=500)
    p_ver.add_argument("--seed", type=int, default=1)
    p_ver.add_argument("--lambdas", default="0")
    p_ver.add_argument("--max-units", type=int, default=12)
    p_ver.add_argument("--out", default=None, help="optional JSON report file")
    p_ver.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BadConfig as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (SolverGuardExceeded, PolicyViolation) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
