"""Command-line entry point.

Exit codes: 0 on success, 1 when a run fails, 2 for usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import fairness, workload
from .experiment import (ExperimentConfig, derive_seed, evaluate_setup,
                         run_tournament, write_outputs)
from .model import (DAY, SCHEMA_VERSION, Scenario, dumps, job_from_dict,
                    job_to_dict, result_to_dict, setup_from_dict, setup_to_dict)
from .policies import POLICY_NAMES, parse_policy
from .sim import Engine

log = logging.getLogger("fairfed")


class CommandError(Exception):
    """A failure reported to the user with exit status 1."""


def _policy(text: str) -> str:
    try:
        return parse_policy(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _policies(text: str) -> list[str]:
    return [_policy(t) for t in text.split(",") if t.strip()]


def _scenario(text: str) -> str:
    try:
        return Scenario.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _scenarios(text: str) -> list[str]:
    return [_scenario(t) for t in text.split(",") if t.strip()]


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _norm(text: str) -> str:
    if text.lower() not in ("l1", "l2"):
        raise argparse.ArgumentTypeError(f"unknown norm {text!r}; use l1 or l2")
    return text.lower()


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path} is not valid JSON: {exc}") from None


def _load_log(path: str) -> workload.WorkloadLog:
    try:
        return workload.load_swf(path)
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: Path, text: str) -> None:
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_case(args):
    """Setup and jobs from JSON files, or sampled from an SWF log."""
    if args.setup:
        data = _read_json(args.setup)
        setup_data = data.get("setup", data)
        jobs_data = data.get("jobs")
        if args.jobs:
            jobs_data = _read_json(args.jobs)
            if isinstance(jobs_data, dict):
                jobs_data = jobs_data["jobs"]
        if jobs_data is None:
            raise CommandError("no jobs given: pass --jobs or a setup file "
                               "with a 'jobs' list")
        try:
            setup = setup_from_dict(setup_data)
            jobs = [job_from_dict(j) for j in jobs_data]
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError(f"malformed setup or jobs: {exc}") from None
        if getattr(args, "unitize", False):
            jobs = list(workload.unitize(
                workload.WorkloadSample(tuple(jobs), 0, 0, "")).jobs)
        return setup, jobs
    raw = workload.sample_window(_load_log(args.log), args.window,
                                 derive_seed(args.seed, "window"))
    total = args.total_cores or workload.default_total_cores(raw)
    sample = workload.unitize(raw) if args.unitize else raw
    return workload.build_scenario(sample, args.scenario, args.orgs,
                                   max(total, args.orgs),
                                   derive_seed(args.seed, "scenario"))


def _add_case_flags(p: argparse.ArgumentParser, unitize_default: bool) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--log", help="SWF workload log (.swf or .swf.gz)")
    src.add_argument("--setup", help="federation setup JSON; may embed 'jobs'")
    p.add_argument("--jobs", help="jobs JSON (list or {'jobs': [...]})")
    p.add_argument("--window", type=_positive, default=DAY,
                   help="sampled window length in seconds (default: 86400)")
    p.add_argument("--scenario", type=_scenario, default="S1",
                   help="S1, S2 or S3 (default: S1)")
    p.add_argument("--orgs", type=_positive, default=5,
                   help="number of organizations (default: 5)")
    p.add_argument("--total-cores", type=_positive, default=None,
                   help="federation size; default is 1.4x peak demand")
    p.add_argument("--unitize", action=argparse.BooleanOptionalAction,
                   default=unitize_default,
                   help="split jobs into one-core one-hour units")
    p.add_argument("--seed", type=int, default=0)


def cmd_simulate(args) -> int:
    setup, jobs = _load_case(args)
    engine = Engine(setup, jobs, args.algorithm, derive_seed(args.seed, "sim"),
                    trace=args.trace)
    result = engine.run()
    out = Path(args.out)
    _write(out, dumps(result_to_dict(result)))
    if args.trace:
        _write(out.with_suffix(".trace"), "".join(l + "\n" for l in engine.trace))
    if args.export:
        _write(Path(args.export), dumps({
            "schema_version": SCHEMA_VERSION, "setup": setup_to_dict(setup),
            "jobs": [job_to_dict(j) for j in jobs]}))
    waits = " ".join(f"{o}={w}" for o, w in result.wait_per_org.items())
    print(f"{args.algorithm}: total wait {result.total_wait} ({waits}); "
          f"{len(result.records)} jobs, makespan {result.makespan}, "
          f"{len(result.unschedulable)} unschedulable")
    return 0


def _tournament_config(args) -> ExperimentConfig:
    if args.config:
        data = _read_json(args.config)
    else:
        data = {}
    logs = list(args.log or [])
    if args.logs_dir:
        found = sorted(p for p in Path(args.logs_dir).iterdir()
                       if p.name.endswith((".swf", ".swf.gz")))
        if not found:
            raise CommandError(f"no .swf or .swf.gz files in {args.logs_dir}")
        logs += [str(p) for p in found]
    overrides = {"logs": logs or None, "samples": args.samples,
                 "window": args.window, "scenarios": args.scenario,
                 "n_orgs": args.orgs, "total_cores": args.total_cores,
                 "algorithms": args.algorithms, "norm": args.norm,
                 "seed": args.seed, "jobs": args.jobs, "out": args.out}
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CommandError(f"invalid configuration: {exc}") from None
    if not config.logs:
        raise CommandError("no logs given: use --log, --logs-dir or a config file")
    return config


def cmd_tournament(args) -> int:
    config = _tournament_config(args)
    logs = [_load_log(p) for p in config.logs]
    outcome = run_tournament(config, logs)
    out = Path(config.out)
    write_outputs(outcome, out)
    _write(out / "config.json", dumps(config.to_dict()))
    for row in outcome.failures:
        print(f"sample {row['log']}#{row['sample']} {row['scenario']} failed: "
              f"{row['error']}", file=sys.stderr)
    print(outcome.table_csv(), end="")
    if len(outcome.failures) == len(outcome.rows):
        raise CommandError("every sample failed")
    return 0


def _report_lines(phi, players, grand_value) -> list[str]:
    lines = [f"phi[{p}] = {phi[p]}" for p in players]
    total = sum(phi.values(), Fraction(0))
    status = "ok" if total == grand_value else "FAILED"
    lines.append(f"efficiency: sum(phi) = {total}, v(N) = {grand_value} {status}")
    return lines


def cmd_shapley(args) -> int:
    if args.table:
        try:
            table = fairness.CoalitionTable.from_dict(_read_json(args.table))
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError(f"malformed coalition table: {exc}") from None
        phi = fairness.shapley(table)
        grand = frozenset(table.players)
        per_alg = {}
        if grand in table.waits:
            waits = dict(table.waits[grand])
            per_alg["table"] = fairness.AlgorithmFairness(
                waits, phi, fairness.unfairness(waits, phi, args.norm),
                fairness.unfairness_exact(waits, phi, args.norm))
        report = fairness.FairnessReport(
            per_alg, {"organizations": list(table.players),
                      "shapley": {p: str(phi[p]) for p in table.players}},
            args.norm)
        lines = _report_lines(phi, table.players, table.value(table.players))
    else:
        if not args.algorithm:
            raise CommandError("--algorithm is required with --setup")
        setup, jobs = _load_case(args)
        report = evaluate_setup(setup, jobs, [args.algorithm],
                                derive_seed(args.seed, "sim"), args.norm)
        res = report.per_algorithm[args.algorithm]
        lines = _report_lines(res.phi, setup.org_ids, sum(res.waits.values()))
        lines.append(f"unfairness ({args.norm}) = {res.unfairness:.6g}")
    _write(Path(args.out), dumps(report.to_dict()))
    print("\n".join(lines))
    return 0


def cmd_synth_log(args) -> int:
    text = workload.synthetic_swf(args.days, args.seed,
                                  jobs_per_day=args.jobs_per_day,
                                  n_users=args.users)
    _write(Path(args.out), text)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairfed",
        description="Simulate federated scheduling and score its fairness.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="schedule one workload with one policy")
    _add_case_flags(p, unitize_default=False)
    p.add_argument("--algorithm", type=_policy, required=True,
                   help="one of " + ", ".join(POLICY_NAMES))
    p.add_argument("--trace", action="store_true",
                   help="also write an event trace next to the result")
    p.add_argument("--export", help="write the generated setup and jobs here")
    p.add_argument("--out", default="result.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tournament", help="score algorithms over sampled windows")
    p.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    p.add_argument("--log", action="append", help="SWF log; repeatable")
    p.add_argument("--logs-dir", help="directory of .swf/.swf.gz logs")
    p.add_argument("--samples", type=_positive)
    p.add_argument("--window", type=_positive)
    p.add_argument("--scenario", type=_scenarios, help="e.g. S1,S2,S3")
    p.add_argument("--orgs", type=_positive)
    p.add_argument("--total-cores", type=_positive)
    p.add_argument("--algorithms", "--algorithm", type=_policies,
                   help="comma-separated; default all")
    p.add_argument("--norm", type=_norm)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=_positive, help="worker processes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tournament)

    p = sub.add_parser("shapley", help="Shapley values of a coalition game")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--table", help="coalition table JSON")
    src.add_argument("--setup", help="setup JSON; coalitions are simulated")
    src.add_argument("--log", help="SWF log; a window is sampled")
    p.add_argument("--jobs")
    p.add_argument("--window", type=_positive, default=DAY)
    p.add_argument("--scenario", type=_scenario, default="S1")
    p.add_argument("--orgs", type=_positive, default=5)
    p.add_argument("--total-cores", type=_positive, default=None)
    p.add_argument("--unitize", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--algorithm", type=_policy)
    p.add_argument("--norm", type=_norm, default="l2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser("synth-log", help="write a synthetic SWF log")
    p.add_argument("--days", type=_positive, default=14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs-per-day", type=_positive, default=400)
    p.add_argument("--users", type=_positive, default=60)
    p.add_argument("--out", default="synthetic.swf")
    p.set_defaults(func=cmd_synth_log)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ValueError, RuntimeError) as exc:
        print(f"fairfed: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
