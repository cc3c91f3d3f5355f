"""Command line front end: scenario runs, seed sweeps, and fuzzing.

Exit status 0 means every requested check passed on every run, 1 means some
check failed, 2 means the input could not be parsed or validated.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .fuzz import run_fuzz
from .netsim import MUTATIONS
from .scenario import CHECKS, ScenarioError, load_scenario, run_scenario


def _csv(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="aresim",
        description="Reconfigurable atomic storage simulation harness.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario", type=Path, help="scenario file path")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario's seed")
    run.add_argument("--seed-sweep", type=int, default=1, metavar="N",
                     help="run N consecutive seeds and aggregate the verdict")
    run.add_argument("--trace-out", type=Path, default=None, metavar="PATH",
                     help="write the JSONL trace here")
    run.add_argument("--report-out", type=Path, default=None, metavar="PATH",
                     help="write the text report here")
    run.add_argument("--allow-overload", action="store_true",
                     help="permit fault schedules beyond tolerance")
    run.add_argument("--check", type=_csv, default=None, metavar="LIST",
                     help=f"comma-separated subset of {','.join(CHECKS)}")
    run.add_argument("--mutate", type=_csv, default=(), metavar="LIST",
                     help=f"enable fault injections: {','.join(MUTATIONS)}")

    fz = sub.add_parser("fuzz", help="run randomized scenarios")
    fz.add_argument("--count", type=int, default=100)
    fz.add_argument("--seed", type=int, default=0)
    fz.add_argument("--mutate", type=_csv, default=(), metavar="LIST")
    fz.add_argument("--save-failures", type=Path, default=None, metavar="DIR",
                    help="persist each failing scenario (full and minimized)")
    fz.add_argument("--report-out", type=Path, default=None, metavar="PATH")
    return ap


def _emit(text: str, out: Path | None):
    sys.stdout.write(text)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    base = sc.seed if args.seed is None else args.seed
    chunks = []
    all_ok = True
    for i in range(args.seed_sweep):
        res = run_scenario(sc, seed=base + i, checks=args.check,
                           allow_overload=args.allow_overload,
                           extra_mutations=args.mutate)
        all_ok = all_ok and res.ok
        if args.seed_sweep == 1:
            chunks.append(res.render())
        else:
            chunks.append(f"seed {base + i}: "
                          f"{'PASS' if res.ok else 'FAIL'}\n")
        if args.trace_out is not None:
            path = args.trace_out
            if args.seed_sweep > 1:
                path = path.with_suffix(f".seed{base + i}{path.suffix}")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(res.trace_jsonl())
    if args.seed_sweep > 1:
        chunks.append(f"sweep: {args.seed_sweep} seeds from {base}, "
                      f"verdict {'PASS' if all_ok else 'FAIL'}\n")
    _emit("".join(chunks), args.report_out)
    return 0 if all_ok else 1


def _cmd_fuzz(args) -> int:
    rep = run_fuzz(args.count, seed=args.seed, extra_mutations=args.mutate,
                   save_dir=args.save_failures)
    _emit(rep.render(), args.report_out)
    return 0 if rep.ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_fuzz(args)
    except (ScenarioError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
