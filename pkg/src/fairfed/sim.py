"""Deterministic discrete-event simulation of the federation broker protocol.

Events at the same instant are processed in phase order: completions,
departures, local submissions, federation publications, then resource
offers. Resource offers at one instant are shuffled by the run seed, which
stands in for brokers reacting in an arbitrary order.
"""
from __future__ import annotations

import heapq
import random
from collections import Counter, defaultdict, deque
from typing import Iterable, Mapping, Optional

from . import policies
from .model import (CompletedRecord, FederationSetup, Job, ScheduleResult,
                    validate_setup, wait_per_org)
from .policies import PolicyKind, PolicyState

COMPLETION, DEPARTURE, SUBMIT, PUBLISH, READY = range(5)
EVENT_NAMES = ("completion", "departure", "submit", "publish", "ready")


class SimulationError(RuntimeError):
    pass


class CoordinationLayer:
    """In-memory stand-in for the shared job registry.

    Claims are first-wins. A claim is released only when the claimant
    leaves the federation and the job is published again.
    """

    def __init__(self, members: Iterable[str]):
        self.members = set(members)
        self.claims: dict[int, str] = {}
        self.completions: list[CompletedRecord] = []
        self._live: dict[int, Job] = {}
        self._queues: dict[str, list] = defaultdict(list)
        self._count: Counter = Counter()
        self._wide: Counter = Counter()  # waiting jobs needing > 1 core

    def __len__(self) -> int:
        return len(self._live)

    @property
    def waiting(self) -> set[int]:
        return set(self._live)

    def publish(self, job: Job) -> None:
        if job.id in self._live:
            raise SimulationError(f"job {job.id} already published")
        self.claims.pop(job.id, None)
        self._live[job.id] = job
        heapq.heappush(self._queues[job.owner], (job.release, job.id, job))
        self._count[job.owner] += 1
        if job.cores > 1:
            self._wide[job.owner] += 1

    def owners(self) -> list[str]:
        return [o for o, n in self._count.items() if n > 0]

    def head(self, owner: str, free: int) -> Optional[Job]:
        """Longest-waiting job of ``owner`` needing at most ``free`` cores."""
        queue = self._queues.get(owner)
        if not queue:
            return None
        while queue and queue[0][1] not in self._live:
            heapq.heappop(queue)
        if not queue:
            return None
        if not self._wide[owner]:
            return queue[0][2]
        best = None
        for entry in queue:
            if entry[1] in self._live and entry[2].cores <= free:
                if best is None or entry < best:
                    best = entry
        return best[2] if best else None

    def _drop(self, job: Job) -> None:
        del self._live[job.id]
        self._count[job.owner] -= 1
        if job.cores > 1:
            self._wide[job.owner] -= 1

    def claim(self, job_id: int, org: str) -> bool:
        job = self._live.get(job_id)
        if job is None or job_id in self.claims:
            return False
        self.claims[job_id] = org
        self._drop(job)
        return True

    def remove_owner(self, owner: str) -> list[int]:
        gone = sorted(j.id for j in self._live.values() if j.owner == owner)
        for job_id in gone:
            self._drop(self._live[job_id])
        self._queues.pop(owner, None)
        return gone

    def remaining(self) -> list[int]:
        return sorted(self._live)


class Engine:
    def __init__(self, setup: FederationSetup, jobs: Iterable[Job],
                 kind: "PolicyKind | str", seed: int = 0,
                 departures: Optional[Mapping[str, int]] = None,
                 trace: bool = False, keep_history: bool = False):
        self.setup = setup
        self.jobs = list(jobs)
        problems = validate_setup(setup, self.jobs)
        if problems:
            raise SimulationError("invalid setup: " + "; ".join(problems[:5]))
        self.kind = policies.parse_policy(kind)
        self.rng = random.Random(seed)
        self.order = {o.id: i for i, o in enumerate(setup.organizations)}
        self.orgs = {o.id: o for o in setup.organizations}
        self.total = {o.id: o.total_cores for o in setup.organizations}
        self.free = {o.id: [m.total_cores - m.reserved_cores for m in o.machines]
                     for o in setup.organizations}
        self.free_total = {o: sum(f) for o, f in self.free.items()}
        self.coord = CoordinationLayer(self.orgs)
        self.policy = PolicyState.empty(self.kind, self.orgs,
                                        keep_history=keep_history)
        policies.set_shares(self.policy, self.total)
        self.local_queue: dict[str, deque] = {o: deque() for o in self.orgs}
        self.running: dict[int, tuple] = {}
        self.records: list[CompletedRecord] = []
        self.background: list[CompletedRecord] = []
        self.removed: list[int] = []
        self.trace: Optional[list[str]] = [] if trace else None
        self._events: list = []
        self._seq = 0
        self._offered: set = set()
        self._submits_at = Counter(j.release for j in self.jobs if not j.background)
        self.now = 0
        for job in sorted(self.jobs, key=lambda j: (j.release, j.id)):
            self._push(job.release, SUBMIT, job)
        for org, t in sorted((departures or {}).items(), key=lambda x: (x[1], x[0])):
            self._push(t, DEPARTURE, org)

    # event plumbing

    def _push(self, time: int, phase: int, payload, key: float = 0.0) -> None:
        self._seq += 1
        heapq.heappush(self._events, (time, phase, key, self._seq, payload))

    def _offer(self, org: str, machine: int) -> None:
        if (org, machine) not in self._offered:
            self._offered.add((org, machine))
            self._push(self.now, READY, (org, machine), self.rng.random())

    def _offer_org(self, org: str, cores: int = 1) -> None:
        for m, free in enumerate(self.free[org]):
            if free >= cores:
                self._offer(org, m)

    def _log(self, kind: str, *ids) -> None:
        if self.trace is not None:
            self.trace.append(" ".join([str(self.now), kind, *map(str, ids)]))

    def run(self) -> ScheduleResult:
        handlers = (self._on_completion, self._on_departure, self._on_submit,
                    self._on_publish, self._on_ready)
        while self._events:
            time, phase, _, _, payload = heapq.heappop(self._events)
            self.now = time
            handlers[phase](payload)
        unschedulable = self.coord.remaining()
        unschedulable += [j.id for q in self.local_queue.values() for j in q]
        for job_id in unschedulable:
            self._log("unschedulable", job_id)
        everything = self.records + self.background
        return ScheduleResult(
            records=tuple(self.records),
            wait_per_org=wait_per_org(self.records, self.orgs),
            makespan=max((r.end for r in everything), default=0),
            background_records=tuple(self.background),
            removed=tuple(sorted(self.removed)),
            unschedulable=tuple(sorted(unschedulable)))

    # protocol

    def exposure_check(self, org: str) -> bool:
        """Whether ``org`` may offer its free capacity to foreign jobs."""
        free = self.free_total[org]
        if free <= 0:
            return False
        threshold = self.orgs[org].exposure_threshold
        return free * threshold.denominator >= threshold.numerator * self.total[org]

    def _start(self, job: Job, org: str, machine: int) -> None:
        self.free[org][machine] -= job.cores
        self.free_total[org] -= job.cores
        self.running[job.id] = (job, org, machine, self.now)
        self._push(self.now + job.duration, COMPLETION, (job.id, self.now))
        if not job.background:
            policies.on_start(self.policy, job.owner, self.now)
        self._log("start", job.id, job.owner, org, machine)

    def _on_submit(self, job: Job) -> None:
        self._log("submit", job.id, job.owner)
        org = job.owner
        if job.background:
            self.local_queue[org].append(job)
            self._offer_org(org)
            return
        if org not in self.coord.members:
            self.removed.append(job.id)
            self._log("removed", job.id)
            return
        if (self._submits_at[job.release] == 1 and not self.coord
                and not self.local_queue[org]):
            for m, free in enumerate(self.free[org]):
                if free >= job.cores:
                    self._start(job, org, m)
                    return
        self._push(self.now, PUBLISH, job)

    def _on_publish(self, job: Job) -> None:
        self.coord.publish(job)
        self._log("publish", job.id, job.owner)
        for org in self.orgs:
            if self.free_total[org] < job.cores:
                continue
            if org in self.coord.members and (org == job.owner
                                              or self.exposure_check(org)):
                self._offer_org(org, job.cores)

    def _on_ready(self, payload) -> None:
        org, machine = payload
        self._offered.discard(payload)
        free = self.free[org][machine]
        if free <= 0:
            return
        queue = self.local_queue[org]
        if queue:
            if queue[0].cores <= free:
                self._log("ready", org, machine)
                self._start(queue.popleft(), org, machine)
                self._offer(org, machine)
            return
        if org not in self.coord.members or not self.coord:
            return
        self._log("ready", org, machine)
        owners = self.coord.owners() if self.exposure_check(org) else [org]
        heads = {}
        for owner in owners:
            if owner in self.coord.members:
                job = self.coord.head(owner, free)
                if job is not None:
                    heads[owner] = job
        while heads:
            chosen = policies.select_org(
                self.policy, heads, self.now,
                {o: j.release for o, j in heads.items()}, self.order)
            job = heads[chosen]
            if self.coord.claim(job.id, org):
                self._start(job, org, machine)
                if self.free[org][machine] > 0 and self.coord:
                    self._offer(org, machine)
                return
            # lost the claim: look again at this owner's queue
            job = self.coord.head(chosen, free)
            if job is None:
                del heads[chosen]
            else:
                heads[chosen] = job

    def _on_completion(self, payload) -> None:
        job_id, started = payload
        entry = self.running.get(job_id)
        if entry is None or entry[3] != started:
            return  # execution abandoned on departure
        del self.running[job_id]
        job, org, machine, start = entry
        self.free[org][machine] += job.cores
        self.free_total[org] += job.cores
        rec = CompletedRecord(job, start, self.now, org)
        self._log("complete", job_id, org)
        if job.background:
            self.background.append(rec)
        else:
            self.records.append(rec)
            self.coord.completions.append(rec)
            policies.on_completion(self.policy, rec)
        self._offer_org(org)

    def _on_departure(self, org: str) -> None:
        if org not in self.coord.members:
            raise SimulationError(f"organization {org} is not a member")
        self._log("departure", org)
        self.coord.members.discard(org)
        for job_id in self.coord.remove_owner(org):
            self.removed.append(job_id)
            self._log("removed", job_id)
        for job_id, (job, where, machine, _) in sorted(self.running.items()):
            if where == org and not job.background and job.owner != org:
                del self.running[job_id]
                self.free[org][machine] += job.cores
                self.free_total[org] += job.cores
                self._push(self.now, PUBLISH, job)
        policies.set_shares(self.policy, {o: self.total[o]
                                          for o in self.coord.members})
        self._offer_org(org)


def run_simulation(setup: FederationSetup, jobs: Iterable[Job],
                   kind: "PolicyKind | str", seed: int = 0, *,
                   departures: Optional[Mapping[str, int]] = None,
                   trace: Optional[list] = None) -> ScheduleResult:
    """Simulate ``jobs`` on ``setup`` under one policy until quiescence.

    ``departures`` maps organizations to the time they leave. When
    ``trace`` is a list, one line per event is appended to it.
    """
    engine = Engine(setup, jobs, kind, seed, departures,
                    trace=trace is not None)
    result = engine.run()
    if trace is not None:
        trace.extend(engine.trace)
    return result
