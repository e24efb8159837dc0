"""Workload ingestion: SWF parsing, 24-hour sampling, unitization, scenarios."""
from __future__ import annotations

import gzip
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .model import (DAY, UNIT_DURATION, FederationSetup, Job, Machine,
                    Organization, Scenario, job_from_dict, job_to_dict,
                    SCHEMA_VERSION)

# 1-based SWF field numbers
SWF_FIELDS = 18
F_SUBMIT, F_RUNTIME, F_ALLOC_PROCS, F_REQ_PROCS, F_USER = 2, 4, 5, 8, 12

DEFAULT_ZIPF_EXPONENT = 1.0
DEFAULT_BACKGROUND_FRACTION = 0.5
S3_EXPOSURE_THRESHOLD = Fraction(3, 10)
CAPACITY_FACTOR = Fraction(14, 10)


class SwfParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class SwfEntry:
    submit: int
    runtime: int
    procs: int
    user: str


@dataclass(frozen=True)
class WorkloadLog:
    entries: tuple[SwfEntry, ...]
    source: str = ""
    skipped: int = 0

    @property
    def span(self) -> int:
        """Seconds covered by submit times, counting both ends inclusively."""
        if not self.entries:
            return 0
        return self.entries[-1].submit - self.entries[0].submit + 1


@dataclass(frozen=True)
class WorkloadSample:
    jobs: tuple[Job, ...]
    window_start: int
    window_length: int
    source: str = ""

    @property
    def is_unitized(self) -> bool:
        return all(j.cores == 1 and j.duration == UNIT_DURATION
                   for j in self.jobs)


def _number(token: str, lineno: int, field_no: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise SwfParseError(
            f"field {field_no} is not numeric: {token!r}", lineno) from None


def parse_swf(text: "str | Iterable[str]", source: str = "") -> WorkloadLog:
    """Parse Standard Workload Format text.

    Records with non-positive run time or no usable processor count are
    dropped and counted in ``WorkloadLog.skipped``.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    entries = []
    skipped = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        fields = line.split()
        if len(fields) < SWF_FIELDS:
            raise SwfParseError(
                f"expected {SWF_FIELDS} fields, found {len(fields)}", lineno)
        submit = _number(fields[F_SUBMIT - 1], lineno, F_SUBMIT)
        runtime = _number(fields[F_RUNTIME - 1], lineno, F_RUNTIME)
        procs = _number(fields[F_ALLOC_PROCS - 1], lineno, F_ALLOC_PROCS)
        if procs == -1:
            procs = _number(fields[F_REQ_PROCS - 1], lineno, F_REQ_PROCS)
        user = fields[F_USER - 1]
        if runtime <= 0 or procs <= 0 or submit < 0:
            skipped += 1
            continue
        entries.append(SwfEntry(submit=int(submit),
                                runtime=max(1, math.ceil(runtime)),
                                procs=int(procs), user=user))
    if not entries:
        raise SwfParseError(f"no usable jobs in log {source or '<text>'}")
    entries.sort(key=lambda e: e.submit)
    return WorkloadLog(tuple(entries), source, skipped)


def load_swf(path: "str | Path") -> WorkloadLog:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8", errors="replace") as fh:
        return parse_swf(fh, source=path.name)


def sample_window(log: WorkloadLog, length: int = DAY,
                  rng_seed: int = 0) -> WorkloadSample:
    """Jobs submitted in a uniformly placed window ``[start, start+length)``.

    Release times are rebased to the window start; job ids are dense in
    log order.
    """
    if length <= 0:
        raise ValueError("window length must be positive")
    if log.span < length:
        raise ValueError(
            f"log {log.source or '<log>'} spans {log.span} s, "
            f"shorter than the {length} s window")
    first = log.entries[0].submit
    start = random.Random(rng_seed).randint(first, first + log.span - length)
    jobs = []
    for e in log.entries:
        if start <= e.submit < start + length:
            jobs.append(Job(id=len(jobs), owner=None, release=e.submit - start,
                            cores=e.procs, duration=e.runtime,
                            origin_user=e.user))
    return WorkloadSample(tuple(jobs), start, length, log.source)


def unitize(sample: WorkloadSample) -> WorkloadSample:
    """Split every (q cores, p hours) job into q*ceil(p) one-core one-hour jobs."""
    out = []
    for job in sample.jobs:
        hours = -(-job.duration // UNIT_DURATION)
        for _ in range(job.cores * hours):
            out.append(Job(id=len(out), owner=job.owner, release=job.release,
                           cores=1, duration=UNIT_DURATION,
                           origin_user=job.origin_user,
                           background=job.background))
    return WorkloadSample(tuple(out), sample.window_start,
                          sample.window_length, sample.source)


def peak_concurrent_demand(sample: WorkloadSample) -> int:
    """Peak sum of cores if every job started at its release time."""
    deltas: dict[int, int] = {}
    for j in sample.jobs:
        deltas[j.release] = deltas.get(j.release, 0) + j.cores
        deltas[j.release + j.duration] = deltas.get(j.release + j.duration, 0) - j.cores
    peak = running = 0
    for t in sorted(deltas):
        running += deltas[t]
        peak = max(peak, running)
    return peak


def default_total_cores(sample: WorkloadSample,
                        factor: Fraction = CAPACITY_FACTOR) -> int:
    """Federation size: ceil(factor * peak concurrent demand).

    Meant for the raw sample; applied to a unitized one it sizes the
    federation to absorb every unit burst and waits vanish.
    """
    return max(1, math.ceil(Fraction(factor) * peak_concurrent_demand(sample)))


def equal_split(total: int, n: int) -> list[int]:
    base, rem = divmod(total, n)
    return [base + (1 if k < rem else 0) for k in range(n)]


def zipf_split(total: int, n: int,
               exponent: float = DEFAULT_ZIPF_EXPONENT) -> list[int]:
    """Largest-remainder apportionment of ``total`` by weights 1/k^exponent.

    Entry k-1 belongs to rank k; every rank gets at least one core.
    """
    if total < n:
        raise ValueError(f"cannot give {n} organizations at least one core "
                         f"out of {total}")
    if exponent == 1:
        weights = [Fraction(1, k) for k in range(1, n + 1)]
    else:
        weights = [Fraction(1 / k ** exponent) for k in range(1, n + 1)]
    wsum = sum(weights)
    quotas = [total * w / wsum for w in weights]
    cores = [math.floor(q) for q in quotas]
    order = sorted(range(n), key=lambda k: (-(quotas[k] - cores[k]), k))
    for k in order[:total - sum(cores)]:
        cores[k] += 1
    for k in range(n):
        while cores[k] < 1:
            donor = max(range(n), key=lambda i: (cores[i], -i))
            cores[donor] -= 1
            cores[k] += 1
    return cores


def _machines(org_id: str, cores: int, machine_cores: Optional[int]):
    size = machine_cores or cores
    out = []
    left = cores
    while left > 0:
        c = min(size, left)
        out.append(Machine(f"{org_id}-m{len(out)}", c))
        left -= c
    return tuple(out)


def build_scenario(sample: WorkloadSample, scenario: "Scenario | str | int",
                   n_orgs: int, total_cores: int, rng_seed: int = 0, *,
                   zipf_exponent: float = DEFAULT_ZIPF_EXPONENT,
                   background_fraction: float = DEFAULT_BACKGROUND_FRACTION,
                   exposure_threshold: Optional[Fraction] = None,
                   machine_cores: Optional[int] = None,
                   ) -> tuple[FederationSetup, list[Job]]:
    """Create organizations and assign job owners for one of the scenarios.

    S1 splits cores equally, S2 follows a Zipf law over a random ranking of
    organizations, S3 splits equally and marks half of the users (in
    expectation) as local background traffic. Users, not jobs, are mapped
    to organizations.
    """
    scenario = Scenario.parse(scenario)
    if n_orgs < 2:
        raise ValueError("a federation needs at least two organizations")
    if total_cores < n_orgs:
        raise ValueError(f"total_cores {total_cores} < n_orgs {n_orgs}")
    rng = random.Random(rng_seed)
    width = len(str(n_orgs - 1))
    org_ids = [f"org{k:0{width}d}" for k in range(n_orgs)]

    if scenario is Scenario.S2:
        by_rank = zipf_split(total_cores, n_orgs, zipf_exponent)
        ranking = list(range(n_orgs))
        rng.shuffle(ranking)
        cores = [0] * n_orgs
        for rank, org_index in enumerate(ranking):
            cores[org_index] = by_rank[rank]
    else:
        cores = equal_split(total_cores, n_orgs)

    if exposure_threshold is None:
        exposure_threshold = (S3_EXPOSURE_THRESHOLD if scenario is Scenario.S3
                              else Fraction(0))
    orgs = tuple(Organization(oid, _machines(oid, c, machine_cores),
                              Fraction(exposure_threshold))
                 for oid, c in zip(org_ids, cores))

    users: list[str] = []
    seen: set[str] = set()
    for job in sample.jobs:
        if job.origin_user not in seen:
            seen.add(job.origin_user)
            users.append(job.origin_user)
    user_map = {}
    background_users = set()
    for user in users:
        user_map[user] = org_ids[rng.randrange(n_orgs)]
        if scenario is Scenario.S3 and rng.random() < background_fraction:
            background_users.add(user)

    jobs = [Job(id=j.id, owner=user_map[j.origin_user], release=j.release,
                cores=j.cores, duration=j.duration, origin_user=j.origin_user,
                background=j.origin_user in background_users)
            for j in sample.jobs]
    return FederationSetup(orgs, user_map, scenario, rng_seed), jobs


def sample_to_dict(sample: WorkloadSample) -> dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "source": sample.source,
            "window_start": sample.window_start,
            "window_length": sample.window_length,
            "jobs": [job_to_dict(j) for j in sample.jobs]}


def sample_from_dict(d: Mapping[str, Any]) -> WorkloadSample:
    return WorkloadSample(tuple(job_from_dict(j) for j in d["jobs"]),
                          int(d.get("window_start", 0)),
                          int(d.get("window_length", DAY)),
                          str(d.get("source", "")))


def synthetic_swf(days: int = 14, seed: int = 0, *, jobs_per_day: int = 400,
                  n_users: int = 60, max_procs: int = 32,
                  median_runtime: int = 1800) -> str:
    """Generate an SWF log with HPC-like traits.

    Diurnal Poisson arrivals, Zipf-distributed user activity, power-of-two
    core counts, lognormal run times capped at 36 h, and per-user job
    shapes so that users submit bursts of similar jobs.
    """
    rng = random.Random(seed)
    user_weights = [1 / k for k in range(1, n_users + 1)]
    sizes = [1 << i for i in range(max_procs.bit_length()) if 1 << i <= max_procs]
    profiles = []
    for _ in range(n_users):
        profiles.append((rng.choice(sizes[:max(1, len(sizes) - rng.randrange(3))]),
                         median_runtime * math.exp(rng.gauss(0, 1.0))))
    lines = [f"; synthetic workload, seed {seed}, {days} days",
             "; fields: SWF 2.2"]
    t = 0.0
    number = 0
    horizon = days * DAY
    peak_rate = 2 * jobs_per_day / DAY
    while True:
        t += rng.expovariate(peak_rate)
        if t >= horizon:
            break
        # thinning: quiet nights, busy afternoons
        if rng.random() > 0.5 * (1 - math.cos(2 * math.pi * (t % DAY) / DAY)) * 0.9 + 0.1:
            continue
        user = rng.choices(range(n_users), user_weights)[0]
        procs_hint, runtime_hint = profiles[user]
        burst = 1 + (rng.random() < 0.3) * rng.randrange(1, 8)
        for _ in range(burst):
            number += 1
            procs = procs_hint if rng.random() < 0.7 else rng.choice(sizes)
            runtime = min(36 * 3600, max(1, int(runtime_hint * math.exp(rng.gauss(0, 0.8)))))
            if rng.random() < 0.01:
                runtime = 0  # failed jobs, as in real logs
            fields = [number, int(t), 0, runtime, procs, -1, -1, procs,
                      runtime * 2, -1, 1, user + 1, 1, -1, 1, -1, -1, -1]
            lines.append(" ".join(str(f) for f in fields))
    return "\n".join(lines) + "\n"
