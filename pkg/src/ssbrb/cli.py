"""Command-line scenario runner.

    ssbrb run --config scenario.cfg --seeds 0..99 --trace-dir out/
    ssbrb run --replay out/seed-7.trace --check brb,irc

Exit status: 0 when nothing is violated (inconclusive verdicts only warn),
1 on any violation, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from typing import Optional, Sequence

from . import verify
from .mutants import MUTANTS, mutant
from .scenario import CHECKS, DEFAULT_CHECKS, ConfigError, parse_scenario, parse_seeds, run_checks, run_differential, run_seed
from .trace import TraceError, read_trace


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssbrb", description="Run broadcast scenarios and check their traces.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="simulate a scenario or replay a trace")
    run.add_argument("--config", help="scenario file (section.key = value lines)")
    g = run.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", help="range A..B or comma list")
    run.add_argument("--horizon", type=int)
    run.add_argument("--trace-dir", help="write one trace and one report file per seed here")
    run.add_argument("--check", help=f"comma list from {','.join(CHECKS)}")
    run.add_argument("--replay", help="run the checkers on an existing trace, no simulation")
    run.add_argument("--mutant", choices=MUTANTS, help="run with a deliberately broken rule")
    run.add_argument("--quiet", action="store_true", help="print only the aggregate summary")
    return ap


def _checks(arg: Optional[str]) -> tuple[str, ...]:
    if not arg:
        return ()
    cs = tuple(c.strip() for c in arg.split(",") if c.strip())
    bad = [c for c in cs if c not in CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}")
    return cs


def _write(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def replay(path: str, checks: tuple[str, ...], out=None) -> int:
    out = out or sys.stdout
    view = read_trace(path)
    cs = checks or DEFAULT_CHECKS.get(view.mode, ("brb",))
    cs = tuple(c for c in cs if c not in ("differential",))
    reports = run_checks(view, cs)
    out.write(verify.format_reports(reports))
    return 1 if verify.any_violated(reports) else 0


def run(args: argparse.Namespace, out=None) -> int:
    out = out or sys.stdout
    if args.replay:
        return replay(args.replay, _checks(args.check), out)
    if not args.config:
        raise ConfigError("either --config or --replay is required")
    with open(args.config) as fh:
        sc = parse_scenario(fh.read())
    if args.seed is not None:
        sc.seeds = [args.seed]
    elif args.seeds:
        sc.seeds = parse_seeds(args.seeds)
    if args.horizon is not None:
        sc.horizon = args.horizon
    if args.check:
        sc.checks = _checks(args.check)
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)

    totals: Counter = Counter()
    violated_seeds = []
    with mutant(args.mutant):
        for seed in sorted(sc.seeds):
            if sc.mode == "baseline-differential":
                res, bview, _ = run_differential(sc, seed)
            else:
                res = run_seed(sc, seed)
            text = verify.format_reports(res.reports)
            for r in res.reports:
                totals[r.verdict] += 1
            if res.violated:
                violated_seeds.append(seed)
            if args.trace_dir:
                base = os.path.join(args.trace_dir, f"seed-{seed}")
                _write(base + ".trace", "\n".join(res.trace) + "\n")
                _write(base + ".report", text)
            if not args.quiet:
                out.write(f"# seed {seed}\n{text}")
    out.write(f"aggregate|seeds={len(sc.seeds)},holds={totals[verify.HOLDS]},"
              f"violated={totals[verify.VIOLATED]},inconclusive={totals[verify.INCONCLUSIVE]}\n")
    if violated_seeds:
        where = f" (traces in {args.trace_dir})" if args.trace_dir else ""
        out.write(f"violations in seeds {','.join(map(str, violated_seeds))}{where}\n")
        return 1
    if totals[verify.INCONCLUSIVE]:
        sys.stderr.write("warning: some properties were inconclusive at the horizon\n")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return run(args)
    except (ConfigError, TraceError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
