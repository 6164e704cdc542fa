"""Command line: ``tdfreq run|validate|plot``.

Log verbosity comes from the TDFREQ_LOG_LEVEL environment variable
(DEBUG, INFO, WARNING, ...; default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .distribution import FeederError
from .headroom import VsmBuildError
from .kernel import CosimError
from .outputs import emit_outputs, format_summary, plot_results
from .scenario import ScenarioError, load_scenario, run, with_overrides
from .transmission import GridError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdfreq", description="T&D frequency co-simulation")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write results")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory (default: scenario 'output' or results/<name>)")
    r.add_argument("--seed", type=int)
    r.add_argument("--no-agc", action="store_true", help="disable the AGC signal")
    r.add_argument("--stop-time", type=float)
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario")
    pl = sub.add_parser("plot", help="render PNGs from a results directory")
    pl.add_argument("results")
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("TDFREQ_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            sc = load_scenario(args.scenario)
            print(f"{args.scenario}: ok ({len(sc.feeders)} feeders, {len(sc.events)} events, "
                  f"stop_time {sc.stop_time:g} s)")
            return 0
        if args.command == "plot":
            for path in plot_results(args.results):
                print(path)
            return 0
        sc = with_overrides(load_scenario(args.scenario), args.seed, args.stop_time, args.no_agc, args.out)
        out = sc.output or Path("results") / sc.name
        res = run(sc)
        emit_outputs(res, out)
        print(format_summary(res.summary), end="")
        print(f"wall clock {res.wall_clock:.2f} s; results in {out}")
        return 0
    except (ScenarioError, CosimError, GridError, FeederError, VsmBuildError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
