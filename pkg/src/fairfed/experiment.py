"""Evaluation harness: sample logs, sweep coalitions, score algorithms."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import fairness, workload
from .fairness import AlgorithmFairness, FairnessReport
from .model import DAY, SCHEMA_VERSION, FederationSetup, Job, Scenario
from .policies import POLICY_NAMES, PolicyKind, parse_policy
from .sim import run_simulation

log = logging.getLogger(__name__)


def derive_seed(master: int, *parts: Any) -> int:
    """Stable 63-bit seed from a master seed and identifying parts."""
    text = "\x1f".join([str(master), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    logs: list[str] = field(default_factory=list)
    samples: int = 20
    window: int = DAY
    scenarios: list[str] = field(default_factory=lambda: ["S1", "S2", "S3"])
    n_orgs: int = 5
    total_cores: Optional[int] = None
    algorithms: list[str] = field(default_factory=lambda: list(POLICY_NAMES))
    norm: str = "l2"
    seed: int = 0
    jobs: int = 1
    out: str = "results"

    def __post_init__(self):
        self.scenarios = [Scenario.parse(s).value for s in self.scenarios]
        self.algorithms = [parse_policy(a).value for a in self.algorithms]
        if self.norm.lower() not in ("l1", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}; use l1 or l2")
        self.norm = self.norm.lower()
        if self.samples < 1 or self.n_orgs < 2 or self.window < 1:
            raise ValueError("samples >= 1, orgs >= 2 and window >= 1 required")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known - {"schema_version"}
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}


def coalitions_policy_invariant(setup: FederationSetup, jobs: Sequence[Job]) -> bool:
    """True when every work-conserving policy yields the same total wait."""
    return (all(j.cores == 1 and j.duration == jobs[0].duration for j in jobs)
            and not any(j.background for j in jobs)
            and all(o.exposure_threshold == 0 for o in setup.organizations))


def evaluate_setup(setup: FederationSetup, jobs: Sequence[Job],
                   algorithms: Iterable["PolicyKind | str"], seed: int = 0,
                   norm: str = "l2", workers: int = 1) -> FairnessReport:
    """Unfairness of every algorithm's grand-coalition schedule.

    Coalition sweeps are shared between algorithms when the characteristic
    function cannot depend on the policy; this is checked against every
    grand-coalition run and the harness falls back to per-algorithm
    sweeps on a mismatch.
    """
    algorithms = [parse_policy(a) for a in algorithms]
    if any(j.cores != 1 or j.duration != workload.UNIT_DURATION for j in jobs):
        raise ValueError("fairness evaluation needs a unitized workload: total "
                         "wait is only schedule-invariant for unit jobs")
    shared = None
    if coalitions_policy_invariant(setup, jobs):
        shared = fairness.coalition_sweep(setup, jobs, algorithms[0], seed,
                                          workers)
    results = {}
    for alg in algorithms:
        grand = run_simulation(setup, jobs, alg, seed)
        waits = dict(grand.wait_per_org)
        table = shared
        if table is not None and sum(waits.values()) != table.value(setup.org_ids):
            log.warning("total wait differs between policies; sweeping per policy")
            shared = table = None
        if table is None:
            table = fairness.coalition_sweep(setup, jobs, alg, seed, workers)
        phi = fairness.shapley(table)
        key = fairness.unfairness_exact(waits, phi, norm)
        results[alg.value] = AlgorithmFairness(
            waits, phi, fairness.unfairness(waits, phi, norm), key)
    return FairnessReport(results, {"organizations": list(setup.org_ids),
                                    "jobs": len(jobs)}, norm)


def prepare_sample(log_data: workload.WorkloadLog, scenario: str, index: int,
                   config: ExperimentConfig):
    base = derive_seed(config.seed, log_data.source, index)
    raw = workload.sample_window(log_data, config.window, base)
    total = config.total_cores or workload.default_total_cores(raw)
    total = max(total, config.n_orgs)
    unit = workload.unitize(raw)
    setup, jobs = workload.build_scenario(
        unit, scenario, config.n_orgs, total,
        derive_seed(config.seed, log_data.source, index, scenario))
    return setup, jobs


def _evaluate_task(args) -> dict[str, Any]:
    log_data, scenario, index, config = args
    row = {"log": log_data.source, "sample": index, "scenario": scenario}
    try:
        setup, jobs = prepare_sample(log_data, scenario, index, config)
        if not jobs:
            raise ValueError("empty window")
        report = evaluate_setup(setup, jobs, config.algorithms,
                                derive_seed(config.seed, "sim", log_data.source,
                                            index, scenario),
                                config.norm)
        row["report"] = report
        row["jobs"] = len(jobs)
        row["total_cores"] = sum(o.total_cores for o in setup.organizations)
    except Exception as exc:  # recorded per sample, the run goes on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


@dataclass
class TournamentOutcome:
    rows: list[dict[str, Any]]
    scores: dict[tuple[str, str, str], int]
    config: ExperimentConfig

    @property
    def failures(self) -> list[dict[str, Any]]:
        return [r for r in self.rows if "error" in r]

    def totals(self, scenario: str) -> dict[str, int]:
        out = {a: 0 for a in self.config.algorithms}
        for (alg, scen, _), pts in self.scores.items():
            if scen == scenario:
                out[alg] += pts
        return out

    def detail_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log", "sample", "scenario", "algorithm", "unfairness",
                    "unfairness_key", "total_wait", "jobs", "total_cores",
                    "status", "schema_version"])
        for r in self.rows:
            if "error" in r:
                for alg in self.config.algorithms:
                    w.writerow([r["log"], r["sample"], r["scenario"], alg, "",
                                "", "", "", "", r["error"], SCHEMA_VERSION])
                continue
            for alg in self.config.algorithms:
                res = r["report"].per_algorithm[alg]
                w.writerow([r["log"], r["sample"], r["scenario"], alg,
                            repr(res.unfairness), str(res.key),
                            sum(res.waits.values()), r["jobs"],
                            r["total_cores"], "ok", SCHEMA_VERSION])
        return buf.getvalue()

    def scores_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "scenario", "log", "score", "schema_version"])
        for (alg, scen, log_name), pts in sorted(self.scores.items()):
            w.writerow([alg, scen, log_name, pts, SCHEMA_VERSION])
        return buf.getvalue()

    def table_csv(self) -> str:
        """Algorithms as rows, scenarios as columns, summed over logs."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", *self.config.scenarios])
        totals = {s: self.totals(s) for s in self.config.scenarios}
        for alg in self.config.algorithms:
            w.writerow([alg, *(totals[s][alg] for s in self.config.scenarios)])
        return buf.getvalue()


def run_tournament(config: ExperimentConfig,
                   logs: Optional[Sequence[workload.WorkloadLog]] = None
                   ) -> TournamentOutcome:
    if logs is None:
        logs = [workload.load_swf(p) for p in config.logs]
    tasks = [(lg, scen, i, config)
             for lg in logs for scen in config.scenarios
             for i in range(config.samples)]
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            rows = list(pool.map(_evaluate_task, tasks))
    else:
        rows = [_evaluate_task(t) for t in tasks]
    scores: dict[tuple[str, str, str], int] = {}
    for lg in logs:
        for scen in config.scenarios:
            keys = {}
            for r in rows:
                if r["log"] == lg.source and r["scenario"] == scen and "report" in r:
                    for alg, res in r["report"].per_algorithm.items():
                        keys[(r["sample"], alg)] = res.key
            pts = fairness.tournament(keys) if keys else {}
            for alg in config.algorithms:
                scores[(alg, scen, lg.source)] = pts.get(alg, 0)
    return TournamentOutcome(rows, scores, config)


def write_outputs(outcome: TournamentOutcome, out_dir: "str | Path") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"scores.csv": outcome.scores_csv(),
             "table.csv": outcome.table_csv(),
             "detail.csv": outcome.detail_csv()}
    paths = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        paths.append(path)
    return paths
