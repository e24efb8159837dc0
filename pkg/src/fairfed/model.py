"""Domain types shared across the simulator, policies and evaluation harness.

Times are integer seconds since simulation start. Constructors do not
enforce invariants; ``validate_setup`` reports violations instead so that
malformed inputs can be described rather than rejected outright.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional

SCHEMA_VERSION = 1

UNIT_DURATION = 3600
DAY = 86400


class Scenario(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"

    @classmethod
    def parse(cls, value: "str | int | Scenario") -> "Scenario":
        if isinstance(value, Scenario):
            return value
        text = str(value).strip().upper()
        if not text.startswith("S"):
            text = "S" + text
        try:
            return cls(text)
        except ValueError:
            raise ValueError(
                f"unknown scenario {value!r}; expected one of 1, 2, 3") from None


@dataclass(frozen=True)
class Job:
    id: int
    owner: Optional[str]
    release: int
    cores: int
    duration: int
    origin_user: str = ""
    background: bool = False


@dataclass(frozen=True)
class CompletedRecord:
    job: Job
    start: int
    end: int
    executor: str

    @property
    def wait(self) -> int:
        return self.start - self.job.release


@dataclass(frozen=True)
class Machine:
    id: str
    total_cores: int
    reserved_cores: int = 0


@dataclass(frozen=True)
class Organization:
    id: str
    machines: tuple[Machine, ...]
    exposure_threshold: Fraction = Fraction(3, 10)

    @property
    def total_cores(self) -> int:
        return sum(m.total_cores for m in self.machines)


@dataclass(frozen=True)
class FederationSetup:
    organizations: tuple[Organization, ...]
    user_map: Mapping[str, str]
    scenario: Scenario = Scenario.S1
    seed: int = 0

    @property
    def org_ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.organizations)

    def organization(self, org_id: str) -> Organization:
        for org in self.organizations:
            if org.id == org_id:
                return org
        raise KeyError(org_id)

    def restricted(self, members: Iterable[str]) -> "FederationSetup":
        """Sub-federation made of ``members`` only, keeping setup order."""
        keep = set(members)
        orgs = tuple(o for o in self.organizations if o.id in keep)
        users = {u: o for u, o in self.user_map.items() if o in keep}
        return FederationSetup(orgs, users, self.scenario, self.seed)


@dataclass(frozen=True)
class ScheduleResult:
    records: tuple[CompletedRecord, ...]
    wait_per_org: Mapping[str, int]
    makespan: int
    background_records: tuple[CompletedRecord, ...] = ()
    removed: tuple[int, ...] = ()
    unschedulable: tuple[int, ...] = ()

    @property
    def total_wait(self) -> int:
        return sum(self.wait_per_org.values())


def wait_per_org(records: Iterable[CompletedRecord],
                 org_ids: Iterable[str]) -> dict[str, int]:
    waits = {o: 0 for o in org_ids}
    for rec in records:
        waits[rec.job.owner] = waits.get(rec.job.owner, 0) + rec.wait
    return waits


def validate_setup(setup: FederationSetup, jobs: Iterable[Job]) -> list[str]:
    """Return human-readable invariant violations; empty when all hold."""
    problems: list[str] = []
    ids = [o.id for o in setup.organizations]
    if len(set(ids)) != len(ids):
        problems.append(f"duplicate organization ids: {sorted(ids)}")
    known = set(ids)
    for org in setup.organizations:
        if not org.machines:
            problems.append(f"organization {org.id} has no machines")
        if not 0 <= org.exposure_threshold <= 1:
            problems.append(
                f"organization {org.id} exposure threshold "
                f"{org.exposure_threshold} outside [0, 1]")
        for m in org.machines:
            if m.total_cores < 1:
                problems.append(f"machine {m.id} of {org.id} has no cores")
            if not 0 <= m.reserved_cores <= m.total_cores:
                problems.append(
                    f"machine {m.id} of {org.id} reserves {m.reserved_cores} "
                    f"of {m.total_cores} cores")
    for user, org in setup.user_map.items():
        if org not in known:
            problems.append(f"user {user} mapped to unknown organization {org}")
    seen: set[int] = set()
    for job in jobs:
        if job.id in seen:
            problems.append(f"job {job.id}: duplicate id")
        seen.add(job.id)
        if job.cores < 1:
            problems.append(f"job {job.id}: cores {job.cores} < 1")
        if job.duration <= 0:
            problems.append(f"job {job.id}: duration {job.duration} <= 0")
        if job.release < 0:
            problems.append(f"job {job.id}: release {job.release} < 0")
        if job.origin_user not in setup.user_map:
            problems.append(
                f"job {job.id}: user {job.origin_user} has no organization")
        elif job.owner not in known:
            problems.append(
                f"job {job.id}: owner {job.owner} is not an organization")
    return problems


# JSON interchange. Field names follow the dataclasses; times are integers,
# organization ids strings, thresholds exact "p/q" strings.

def job_to_dict(job: Job) -> dict[str, Any]:
    return {"id": job.id, "owner": job.owner, "release": job.release,
            "cores": job.cores, "duration": job.duration,
            "origin_user": job.origin_user, "background": job.background}


def job_from_dict(d: Mapping[str, Any]) -> Job:
    return Job(id=int(d["id"]), owner=d.get("owner"), release=int(d["release"]),
               cores=int(d["cores"]), duration=int(d["duration"]),
               origin_user=str(d.get("origin_user", "")),
               background=bool(d.get("background", False)))


def record_to_dict(rec: CompletedRecord) -> dict[str, Any]:
    return {"job": job_to_dict(rec.job), "start": rec.start, "end": rec.end,
            "executor": rec.executor}


def record_from_dict(d: Mapping[str, Any]) -> CompletedRecord:
    return CompletedRecord(job_from_dict(d["job"]), int(d["start"]),
                           int(d["end"]), str(d["executor"]))


def setup_to_dict(setup: FederationSetup) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "organizations": [
            {"id": o.id,
             "exposure_threshold": str(o.exposure_threshold),
             "machines": [{"id": m.id, "total_cores": m.total_cores,
                           "reserved_cores": m.reserved_cores}
                          for m in o.machines]}
            for o in setup.organizations],
        "user_map": dict(sorted(setup.user_map.items())),
        "scenario": setup.scenario.value,
        "seed": setup.seed,
    }


def setup_from_dict(d: Mapping[str, Any]) -> FederationSetup:
    orgs = tuple(
        Organization(
            id=str(o["id"]),
            machines=tuple(Machine(str(m["id"]), int(m["total_cores"]),
                                   int(m.get("reserved_cores", 0)))
                           for m in o["machines"]),
            exposure_threshold=Fraction(str(o.get("exposure_threshold", "3/10"))))
        for o in d["organizations"])
    return FederationSetup(
        organizations=orgs,
        user_map={str(k): str(v) for k, v in d["user_map"].items()},
        scenario=Scenario.parse(d.get("scenario", "S1")),
        seed=int(d.get("seed", 0)))


def result_to_dict(result: ScheduleResult) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "records": [record_to_dict(r) for r in result.records],
        "wait_per_org": dict(result.wait_per_org),
        "makespan": result.makespan,
        "background_records": [record_to_dict(r)
                               for r in result.background_records],
        "removed": list(result.removed),
        "unschedulable": list(result.unschedulable),
    }


def result_from_dict(d: Mapping[str, Any]) -> ScheduleResult:
    return ScheduleResult(
        records=tuple(record_from_dict(r) for r in d["records"]),
        wait_per_org={str(k): int(v) for k, v in d["wait_per_org"].items()},
        makespan=int(d["makespan"]),
        background_records=tuple(record_from_dict(r)
                                 for r in d.get("background_records", ())),
        removed=tuple(int(i) for i in d.get("removed", ())),
        unschedulable=tuple(int(i) for i in d.get("unschedulable", ())))


def dumps(obj: Any) -> str:
    """Deterministic JSON text (stable key order, trailing newline)."""
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"
