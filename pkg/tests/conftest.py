from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairfed.model import FederationSetup, Job, Machine, Organization  # noqa: E402


def make_setup(cores_by_org, threshold=Fraction(0), machines_per_org=1):
    orgs = []
    for oid, cores in cores_by_org.items():
        per = [cores // machines_per_org] * machines_per_org
        per[0] += cores - sum(per)
        orgs.append(Organization(
            oid, tuple(Machine(f"{oid}{k}", c) for k, c in enumerate(per) if c),
            Fraction(threshold)))
    users = {f"u{oid}": oid for oid in cores_by_org}
    return FederationSetup(tuple(orgs), users)


def job(id, owner, release, cores=1, duration=1, background=False):
    return Job(id, owner, release, cores, duration, f"u{owner}", background)


def departure_case():
    """At t=10, A runs B's jobs 2 and 3 while A's job 6 runs elsewhere."""
    setup = make_setup({"A": 2, "B": 2, "C": 3})
    jobs = [
        job(0, "B", 0, duration=100), job(1, "B", 0, duration=100),
        job(2, "B", 1, duration=50), job(3, "B", 1, duration=50),
        job(4, "C", 0, duration=100), job(5, "C", 0, duration=100),
        job(6, "A", 2, duration=30),
        job(7, "A", 3, duration=30), job(8, "A", 3, duration=30),
        job(9, "A", 3, duration=30),
    ]
    return setup, jobs


def worked_example_case():
    """Two one-machine organizations: A submits at 0,2,4,6,8, B twice at 4."""
    setup = make_setup({"A": 1, "B": 1})
    jobs = [job(i, "A", t, duration=2) for i, t in enumerate([0, 2, 4, 6, 8])]
    jobs += [job(5, "B", 4, duration=2), job(6, "B", 4, duration=2)]
    return setup, jobs


@pytest.fixture
def worked_example():
    return worked_example_case()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
