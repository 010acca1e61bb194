"""Command line: ``hyperham validate|simulate|diagnose --scenario FILE``.

Exit codes: 0 pass, 1 validation/diagnostic failure, 2 runtime error
(bad scenario content, aborted integration), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, runner
from .integrate import Trajectory
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("hyperham")


def _write_json(path: Path, record: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _emit(text: str, quiet: bool) -> None:
    if not quiet:
        print(text)


def _warn_spinor_norm(sc: Scenario) -> None:
    if sc.kind != "pauli":
        return
    for i, x in enumerate(sc.initial_states):
        norm = float(np.linalg.norm(x))
        if abs(norm - 1.0) > 1e-8:
            log.warning("initial spinor %d has norm %.12g; a physical spin state is normalized",
                        i, norm)
    field = sc.build()
    if field.out_of_domain(sc.time.t0, sc.time.t1):
        log.warning("time grid extends beyond the field table; values are clamped")


def cmd_validate(sc: Scenario, out: Path | None, quiet: bool) -> int:
    report = runner.validate(sc)
    _emit(report.to_text(), quiet)
    if out is not None:
        _write_json(out / sc.output["validation"],
                    {"scenario": sc.to_record(), "report": report.to_record()})
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_simulate(sc: Scenario, out: Path, quiet: bool) -> int:
    validation = runner.validate(sc)
    if not validation.passed:
        _emit(validation.to_text(), quiet)
        return EXIT_FAIL
    _warn_spinor_norm(sc)
    start = time.perf_counter()
    trajs = runner.simulate(sc)
    wall = time.perf_counter() - start
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for name, traj in zip(runner.csv_names(sc), trajs):
        traj.to_csv(out / name, runner.state_names(sc))
        cons = runner.quick_conservation(sc, traj)
        runs.append({"csv": name, "samples": len(traj), "final_time": float(traj.times[-1]),
                     "final_state": traj.final.tolist(), "failed": traj.failed,
                     "message": traj.message, "conservation": cons.to_record()})
        _emit(f"wrote {out / name} ({len(traj)} samples)", quiet)
    summary = {"version": __version__, "scenario": sc.to_record(), "runs": runs,
               "wall_time_s": wall}
    _write_json(out / sc.output["summary"], summary)
    if any(t.failed for t in trajs):
        for t in trajs:
            if t.failed:
                log.error("integration aborted: %s", t.message)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_diagnose(sc: Scenario | None, trajectory: Path | None, out: Path | None,
                 quiet: bool, tol: float | None) -> int:
    if trajectory is not None:
        traj, _ = Trajectory.from_csv(trajectory)
        if sc is None:
            report = runner.diagnose_csv_only(traj, tol if tol is not None else 1e-9)
        else:
            if traj.states.shape[1] != sc.dim:
                raise ScenarioError(str(trajectory), f"expected {sc.dim} state columns, "
                                                     f"found {traj.states.shape[1]}")
            report = runner.diagnose(sc, [traj])
    else:
        trajs = runner.simulate(sc)
        report = runner.diagnose(sc, trajs)
    _emit(report.to_text(), quiet)
    if out is not None:
        name = sc.output["diagnostics"] if sc is not None else "diagnostics.json"
        record = {"report": report.to_record()}
        if sc is not None:
            record["scenario"] = sc.to_record()
        _write_json(out / name, record)
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperham", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "check generators / structures only"),
                        ("simulate", "integrate and write trajectory CSV + JSON summary"),
                        ("diagnose", "evaluate conservation and geometry diagnostics")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", type=Path, required=name != "diagnose",
                       help="scenario JSON file")
        p.add_argument("--out", type=Path, default=Path(".") if name == "simulate" else None,
                       help="output directory")
        p.add_argument("--tol", type=float, default=None,
                       help="override every tolerance in the scenario")
        p.add_argument("--quiet", action="store_true", help="suppress report output")
        if name == "diagnose":
            p.add_argument("--trajectory", type=Path, default=None,
                           help="diagnose an existing trajectory CSV instead of simulating")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "diagnose" and args.scenario is None and args.trajectory is None:
        log.error("diagnose needs --scenario and/or --trajectory")
        return EXIT_RUNTIME
    try:
        sc = load_scenario(args.scenario) if args.scenario is not None else None
        if sc is not None and args.tol is not None:
            sc.with_tolerance(args.tol)
        if args.command == "validate":
            return cmd_validate(sc, args.out, args.quiet)
        if args.command == "simulate":
            return cmd_simulate(sc, args.out, args.quiet)
        return cmd_diagnose(sc, args.trajectory, args.out, args.quiet, args.tol)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
