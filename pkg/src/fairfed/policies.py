"""Selection policies: DirectContr variants, FairShare and round robin.

DirectContr gives the next free slot to the organization with the largest
``contribution - utility``. Contribution sums a utility function over jobs
executed on the organization's machines (its own jobs included; they cancel
against its utility), utility sums it over jobs the organization submitted.

For the time-dependent utilities each job contributes ``area * (T - c)``
with ``area = (e - s) * cpu`` and a job constant ``c``, so per-organization
sums of ``area`` and ``area * c`` are enough to evaluate any future ``T``.
The ``area * c`` sums are kept doubled to stay in integers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .model import CompletedRecord, Job


class PolicyKind(str, enum.Enum):
    ORIG_DIRECT = "orig_direct"
    REL_DIRECT = "rel_direct"
    SIMPL_DIRECT = "simpl_direct"
    FAIRSHARE = "fairshare"
    ROUND_ROBIN = "round_robin"

    @property
    def is_direct(self) -> bool:
        return self in DIRECT_KINDS


DIRECT_KINDS = frozenset({PolicyKind.ORIG_DIRECT, PolicyKind.REL_DIRECT,
                          PolicyKind.SIMPL_DIRECT})
POLICY_NAMES = tuple(k.value for k in PolicyKind)


def parse_policy(name: "str | PolicyKind") -> PolicyKind:
    if isinstance(name, PolicyKind):
        return name
    try:
        return PolicyKind(name.strip().lower())
    except ValueError:
        raise ValueError(f"unknown algorithm {name!r}; valid names: "
                         f"{', '.join(POLICY_NAMES)}") from None


def _area(rec: CompletedRecord) -> int:
    return (rec.end - rec.start) * rec.job.cores


def utility_psi(rec: CompletedRecord, T: int) -> Fraction:
    if T < rec.end:
        raise ValueError(f"utility undefined at T={T} before job end {rec.end}")
    return _area(rec) * (T - Fraction(rec.start + rec.end - 1, 2))


def utility_psi_prime(rec: CompletedRecord, T: int) -> Fraction:
    if T < rec.end:
        raise ValueError(f"utility undefined at T={T} before job end {rec.end}")
    return _area(rec) * (T + rec.job.release - Fraction(rec.end + rec.start - 1, 2))


def utility_psi_double_prime(rec: CompletedRecord) -> int:
    return _area(rec)


def _doubled_constant(rec: CompletedRecord, kind: PolicyKind) -> int:
    if kind is PolicyKind.ORIG_DIRECT:
        return rec.start + rec.end - 1
    if kind is PolicyKind.REL_DIRECT:
        return rec.start + rec.end - 1 - 2 * rec.job.release
    return 0


@dataclass
class Account:
    contribution_area: int = 0
    contribution_moment2: int = 0
    utility_area: int = 0
    utility_moment2: int = 0
    share: Fraction = Fraction(0)
    last_start: Optional[int] = None


@dataclass
class PolicyState:
    kind: PolicyKind
    accounts: dict[str, Account]
    history: Optional[list[CompletedRecord]] = None

    @classmethod
    def empty(cls, kind: "PolicyKind | str", org_ids: Iterable[str],
              shares: Optional[Mapping[str, int]] = None,
              keep_history: bool = False) -> "PolicyState":
        state = cls(parse_policy(kind), {o: Account() for o in org_ids},
                    [] if keep_history else None)
        if shares is not None:
            set_shares(state, shares)
        return state


def set_shares(state: PolicyState, cores: Mapping[str, int]) -> None:
    """Share of each organization = its contributed cores / all cores."""
    total = sum(cores.get(o, 0) for o in state.accounts)
    for org, acc in state.accounts.items():
        acc.share = Fraction(cores.get(org, 0), total) if total else Fraction(0)


def _rank(state: PolicyState, org: str, T: int):
    """Ordering key equivalent to ``priority`` (direct variants doubled)."""
    acc = state.accounts[org]
    kind = state.kind
    if kind is PolicyKind.SIMPL_DIRECT:
        return 2 * (acc.contribution_area - acc.utility_area)
    if kind.is_direct:
        return (2 * T * (acc.contribution_area - acc.utility_area)
                - (acc.contribution_moment2 - acc.utility_moment2))
    if kind is PolicyKind.FAIRSHARE:
        if acc.share <= 0:
            return (0, Fraction(0))
        return (1, -acc.utility_area / acc.share)
    if acc.last_start is None:
        return (1, 0)
    return (0, -acc.last_start)


def priority(state: PolicyState, org: str, T: int):
    """Comparable priority of ``org`` at time ``T``; larger wins.

    Direct variants return the exact ``contribution - utility``. FairShare
    and round robin return tuples whose first element ranks organizations
    with zero share (resp. never selected) apart from the rest.
    """
    key = _rank(state, org, T)
    if state.kind.is_direct:
        return Fraction(key, 2)
    return key


def select_org(state: PolicyState, candidates: Iterable[str], T: int,
               head_release: Mapping[str, int],
               order: Optional[Mapping[str, int]] = None) -> str:
    """Argmax of priority; ties go to the older head job, then the lower org.

    ``head_release`` gives the release time of each candidate's oldest
    waiting job; ``order`` ranks organizations (defaults to id order).
    """
    best = None
    best_key = None
    for org in candidates:
        rank = order[org] if order is not None else org
        key = (_rank(state, org, T), -head_release[org])
        if best is None or key > best_key or (key == best_key and rank < best_rank):
            best, best_key, best_rank = org, key, rank
    if best is None:
        raise ValueError("no candidate organizations")
    return best


def select_task(queue: Iterable[Job]) -> Job:
    """Longest-waiting job: minimal release, then minimal id."""
    return min(queue, key=lambda j: (j.release, j.id))


def on_start(state: PolicyState, owner: str, T: int) -> None:
    state.accounts[owner].last_start = T


def on_completion(state: PolicyState, rec: CompletedRecord) -> PolicyState:
    kind = state.kind
    if state.history is not None:
        state.history.append(rec)
    if kind is PolicyKind.ROUND_ROBIN:
        return state
    area = _area(rec)
    owner = state.accounts[rec.job.owner]
    if kind is PolicyKind.FAIRSHARE:
        owner.utility_area += area
        return state
    moment2 = area * _doubled_constant(rec, kind)
    executor = state.accounts[rec.executor]
    executor.contribution_area += area
    executor.contribution_moment2 += moment2
    owner.utility_area += area
    owner.utility_moment2 += moment2
    return state


def compact(state: PolicyState) -> PolicyState:
    """Drop the record history, keeping only the per-organization scalars."""
    return PolicyState(state.kind,
                       {o: replace(a) for o, a in state.accounts.items()},
                       None)


def priority_from_history(records: Sequence[CompletedRecord], org: str, T: int,
                          kind: "PolicyKind | str",
                          share: Fraction = Fraction(1),
                          last_start: Optional[int] = None):
    """Priority recomputed by summing utilities over every record.

    Reference path for the accumulator arithmetic in ``priority``.
    """
    kind = parse_policy(kind)
    if kind.is_direct:
        if kind is PolicyKind.ORIG_DIRECT:
            util = lambda r: utility_psi(r, T)
        elif kind is PolicyKind.REL_DIRECT:
            util = lambda r: utility_psi_prime(r, T)
        else:
            util = utility_psi_double_prime
        contribution = sum((util(r) for r in records if r.executor == org),
                           Fraction(0))
        utility = sum((util(r) for r in records if r.job.owner == org),
                      Fraction(0))
        return Fraction(contribution - utility)
    if kind is PolicyKind.FAIRSHARE:
        if share <= 0:
            return (0, Fraction(0))
        used = sum(utility_psi_double_prime(r) for r in records
                   if r.job.owner == org)
        return (1, -Fraction(used) / share)
    if last_start is None:
        return (1, 0)
    return (0, -last_start)
