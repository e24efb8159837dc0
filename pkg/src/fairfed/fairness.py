"""Coalition sweeps, exact Shapley values, unfairness and tournament scores."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Iterable, Mapping, Optional, Sequence

from .model import SCHEMA_VERSION, FederationSetup, Job
from .policies import PolicyKind
from .sim import run_simulation

MAX_EXACT_PLAYERS = 20


class IncompleteTableError(ValueError):
    pass


def coalition_label(members: Iterable[Hashable]) -> str:
    return "{" + ",".join(str(m) for m in members) + "}"


@dataclass(frozen=True)
class CoalitionTable:
    """Wait vectors of every nonempty coalition, keyed by frozenset.

    ``values`` holds characteristic values for coalitions that come
    without a per-member vector.
    """
    players: tuple[str, ...]
    waits: Mapping[frozenset, Mapping[str, int]] = field(default_factory=dict)
    values: Mapping[frozenset, Fraction] = field(default_factory=dict)

    def value(self, coalition: Iterable[str]) -> Fraction:
        key = frozenset(coalition)
        if not key:
            return Fraction(0)
        if key in self.waits:
            return Fraction(sum(self.waits[key].values()))
        if key in self.values:
            return Fraction(self.values[key])
        raise IncompleteTableError(
            f"missing coalition {coalition_label(self._ordered(key))}")

    def _ordered(self, key: frozenset) -> list[str]:
        rank = {p: i for i, p in enumerate(self.players)}
        return sorted(key, key=lambda p: rank.get(p, len(rank)))

    def missing(self) -> list[frozenset]:
        out = []
        for size in range(1, len(self.players) + 1):
            for combo in itertools.combinations(self.players, size):
                key = frozenset(combo)
                if key not in self.waits and key not in self.values:
                    out.append(key)
        return out

    def characteristic(self) -> dict[frozenset, Fraction]:
        missing = self.missing()
        if missing:
            raise IncompleteTableError(
                "missing coalition " + ", ".join(
                    coalition_label(self._ordered(k)) for k in missing))
        out = {frozenset(): Fraction(0)}
        for size in range(1, len(self.players) + 1):
            for combo in itertools.combinations(self.players, size):
                out[frozenset(combo)] = self.value(combo)
        return out

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for size in range(1, len(self.players) + 1):
            for combo in itertools.combinations(self.players, size):
                key = frozenset(combo)
                row: dict[str, Any] = {"members": list(combo)}
                if key in self.waits:
                    row["wait_vector"] = {p: self.waits[key][p] for p in combo}
                    row["value"] = sum(self.waits[key].values())
                elif key in self.values:
                    row["value"] = _number_out(self.values[key])
                else:
                    continue
                rows.append(row)
        return {"schema_version": SCHEMA_VERSION,
                "organizations": list(self.players), "coalitions": rows}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CoalitionTable":
        players = tuple(str(p) for p in d["organizations"])
        waits, values = {}, {}
        for row in d["coalitions"]:
            key = frozenset(str(m) for m in row["members"])
            unknown = key - set(players)
            if unknown:
                raise ValueError(f"coalition {coalition_label(sorted(unknown))} "
                                 "names unknown organizations")
            if "wait_vector" in row:
                vec = {str(k): int(v) for k, v in row["wait_vector"].items()}
                if set(vec) != key:
                    raise ValueError(
                        f"wait vector keys differ from members {sorted(key)}")
                waits[key] = vec
            else:
                values[key] = Fraction(str(row["value"]))
        return cls(players, waits, values)


def _number_out(x: Fraction) -> Any:
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else str(x)


def _sweep_one(args) -> tuple[frozenset, dict[str, int]]:
    setup, jobs, members, kind, seed = args
    sub = setup.restricted(members)
    keep = set(members)
    sub_jobs = [j for j in jobs if j.owner in keep]
    result = run_simulation(sub, sub_jobs, kind, seed)
    return frozenset(members), dict(result.wait_per_org)


def coalition_sweep(setup: FederationSetup, jobs: Sequence[Job],
                    kind: "PolicyKind | str", seed: int = 0,
                    workers: int = 1) -> CoalitionTable:
    """Simulate every nonempty coalition on its own machines and jobs."""
    players = setup.org_ids
    if len(players) > MAX_EXACT_PLAYERS:
        raise ValueError(
            f"{len(players)} organizations exceed the exact enumeration limit "
            f"of {MAX_EXACT_PLAYERS}; a Monte-Carlo estimate would be needed "
            "and is not implemented")
    tasks = [(setup, jobs, combo, kind, seed)
             for size in range(1, len(players) + 1)
             for combo in itertools.combinations(players, size)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = list(pool.map(_sweep_one, tasks, chunksize=4))
    else:
        done = [_sweep_one(t) for t in tasks]
    return CoalitionTable(players, dict(done))


def shapley_values(players: Sequence[Hashable],
                   v: Mapping[frozenset, Any]) -> dict[Hashable, Fraction]:
    """Exact Shapley value from the weighted-subset formula.

    ``v`` must hold every subset of ``players``; the empty set may be
    omitted and counts as zero.
    """
    n = len(players)
    fact = [math.factorial(k) for k in range(n + 1)]
    weights = [Fraction(fact[s] * fact[n - s - 1], fact[n]) for s in range(n)]

    def val(key: frozenset) -> Fraction:
        if not key:
            return Fraction(v.get(key, 0))
        try:
            return Fraction(v[key])
        except KeyError:
            raise IncompleteTableError(
                f"missing coalition {coalition_label(p for p in players if p in key)}"
            ) from None

    phi = {}
    for p in players:
        others = [q for q in players if q != p]
        total = Fraction(0)
        for size in range(n):
            for combo in itertools.combinations(others, size):
                s = frozenset(combo)
                total += weights[size] * (val(s | {p}) - val(s))
        phi[p] = total
    return phi


def shapley(table: CoalitionTable) -> dict[str, Fraction]:
    return shapley_values(table.players, table.characteristic())


def _diffs(waits: Mapping[str, Any], phi: Mapping[str, Any]) -> list[Fraction]:
    if set(waits) != set(phi):
        raise ValueError(f"index mismatch: {sorted(waits)} vs {sorted(phi)}")
    return [Fraction(waits[k]) - Fraction(phi[k]) for k in sorted(waits)]


def unfairness_exact(waits: Mapping[str, Any], phi: Mapping[str, Any],
                     norm: str = "l2") -> Fraction:
    """Exact ordering key: squared distance for L2, distance for L1."""
    diffs = _diffs(waits, phi)
    norm = norm.lower()
    if norm == "l1":
        return sum((abs(d) for d in diffs), Fraction(0))
    if norm == "l2":
        return sum((d * d for d in diffs), Fraction(0))
    raise ValueError(f"unknown norm {norm!r}; use l1 or l2")


def unfairness(waits: Mapping[str, Any], phi: Mapping[str, Any],
               norm: str = "l2") -> float:
    """Distance between a wait vector and the Shapley vector."""
    key = unfairness_exact(waits, phi, norm)
    return float(key) if norm.lower() == "l1" else math.sqrt(key)


def tournament(scores_in: Mapping[tuple[Hashable, Hashable], Any]
               ) -> dict[Hashable, int]:
    """Pairwise scoring: one point per strictly less unfair opponent.

    Keys are ``(sample, algorithm)`` pairs; every sample must cover the
    same algorithms.
    """
    by_sample: dict[Hashable, dict[Hashable, Any]] = {}
    algorithms: list[Hashable] = []
    for (sample, alg), value in scores_in.items():
        by_sample.setdefault(sample, {})[alg] = value
        if alg not in algorithms:
            algorithms.append(alg)
    points = {a: 0 for a in algorithms}
    for sample, row in by_sample.items():
        if set(row) != set(algorithms):
            raise ValueError(f"sample {sample!r} lacks algorithms "
                             f"{sorted(map(str, set(algorithms) - set(row)))}")
        for a, b in itertools.permutations(algorithms, 2):
            if row[a] < row[b]:
                points[a] += 1
    return points


@dataclass(frozen=True)
class AlgorithmFairness:
    waits: Mapping[str, int]
    phi: Mapping[str, Fraction]
    unfairness: float
    key: Fraction


@dataclass(frozen=True)
class FairnessReport:
    per_algorithm: Mapping[str, AlgorithmFairness]
    metadata: Mapping[str, Any] = field(default_factory=dict)
    norm: str = "l2"

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "norm": self.norm,
            "metadata": dict(self.metadata),
            "algorithms": {
                alg: {"wait_vector": dict(r.waits),
                      "shapley": {k: str(v) for k, v in r.phi.items()},
                      "unfairness": r.unfairness,
                      "unfairness_key": str(r.key)}
                for alg, r in self.per_algorithm.items()},
        }
