import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from fairfed import fairness
from fairfed.fairness import (CoalitionTable, IncompleteTableError,
                              coalition_sweep, shapley, shapley_values,
                              tournament, unfairness, unfairness_exact)
from fairfed.model import FederationSetup, Machine, Organization
from fairfed.sim import run_simulation

from conftest import job, make_setup
from oracles import shapley_by_orderings


def game(players, fn):
    return {frozenset(c): fn(frozenset(c))
            for k in range(len(players) + 1)
            for c in itertools.combinations(players, k)}


def test_two_player_example():
    v = {frozenset({1}): 1, frozenset({2}): 3, frozenset({1, 2}): 6}
    assert shapley_values([1, 2], v) == {1: 2, 2: 4}
    assert shapley_by_orderings([1, 2], v) == {1: 2, 2: 4}


def test_three_player_majority_with_veto():
    v = game([1, 2, 3], lambda s: int({1, 2} <= s or {1, 3} <= s))
    expected = {1: Fraction(2, 3), 2: Fraction(1, 6), 3: Fraction(1, 6)}
    assert shapley_by_orderings([1, 2, 3], v) == expected
    assert shapley_values([1, 2, 3], v) == expected


def test_additive_game():
    w = {"a": 5, "b": -2, "c": 11, "d": 0}
    v = game(list(w), lambda s: sum(w[p] for p in s))
    assert shapley_values(list(w), v) == w


def test_missing_subset_is_named():
    v = {frozenset({1}): 1, frozenset({2}): 3}
    with pytest.raises(IncompleteTableError, match=r"\{1,2\}"):
        shapley_values([1, 2], v)


def random_game(rng, n):
    players = list(range(n))
    return players, game(players, lambda s: Fraction(rng.randint(-50, 200)) if s else 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 9))
def test_formula_matches_orderings(n, seed):
    players, v = random_game(random.Random(seed), n)
    assert shapley_values(players, v) == shapley_by_orderings(players, v)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10 ** 9))
def test_efficiency_and_linearity(n, seed):
    rng = random.Random(seed)
    players, v = random_game(rng, n)
    _, u = random_game(rng, n)
    phi_v = shapley_values(players, v)
    phi_u = shapley_values(players, u)
    assert sum(phi_v.values()) == v[frozenset(players)]
    both = {s: v[s] + u[s] for s in v}
    phi_both = shapley_values(players, both)
    assert phi_both == {p: phi_v[p] + phi_u[p] for p in players}


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 9))
def test_dummy_and_symmetry(n, seed):
    rng = random.Random(seed)
    players, base = random_game(rng, n - 1)
    dummy = n - 1
    # the new player never changes any coalition's value
    v = {s: base[s - {dummy}] for s in game(players + [dummy], lambda s: 0)}
    phi = shapley_values(players + [dummy], v)
    assert phi[dummy] == 0
    # relabelling two players swaps their values
    a, b = rng.sample(players + [dummy], 2)
    swap = {a: b, b: a}
    w = {frozenset(swap.get(p, p) for p in s): x for s, x in v.items()}
    phi_w = shapley_values(players + [dummy], w)
    assert phi_w[a] == phi[b] and phi_w[b] == phi[a]


def test_unfairness_examples():
    assert unfairness({"a": 3, "b": 1}, {"a": 3, "b": 1}) == 0
    assert unfairness({"a": 10, "b": 0}, {"a": 5, "b": 5}, "l1") == 10
    assert unfairness({"a": 10, "b": 0}, {"a": 5, "b": 5}) == pytest.approx(7.0710678, abs=1e-6)
    assert unfairness_exact({"a": 10, "b": 0}, {"a": 5, "b": 5}) == 50


def test_unfairness_index_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        unfairness({"a": 1}, {"b": 1})
    with pytest.raises(ValueError, match="norm"):
        unfairness({"a": 1}, {"a": 1}, "linf")


@given(st.dictionaries(st.sampled_from("abcd"), st.integers(-100, 100), min_size=1),
       st.integers(-100, 100))
def test_unfairness_zero_iff_equal(w, bump):
    phi = dict(w)
    assert unfairness(w, phi) == 0
    k = sorted(w)[0]
    phi[k] += bump
    assert (unfairness(w, phi) == 0) == (bump == 0)
    assert unfairness(w, phi, "l1") >= 0


def test_tournament_three_algorithms_example():
    assert tournament({(0, "A"): 60, (0, "B"): 80, (0, "C"): 60}) == {"A": 1, "B": 0, "C": 1}


def test_tournament_ties_score_nothing():
    assert tournament({(0, a): 5 for a in "ABC"}) == {"A": 0, "B": 0, "C": 0}


def test_tournament_two_samples():
    data = {(0, "A"): 1, (0, "B"): 2, (0, "C"): 3,
            (1, "A"): 0, (1, "B"): 9, (1, "C"): 4}
    assert tournament(data)["A"] == 4


def test_tournament_requires_complete_samples():
    with pytest.raises(ValueError, match="lacks"):
        tournament({(0, "A"): 1, (0, "B"): 2, (1, "A"): 3})


@given(st.dictionaries(st.tuples(st.integers(0, 3), st.sampled_from("ABCDE")),
                       st.integers(0, 5)))
def test_tournament_points_per_sample(data):
    samples = {s for s, _ in data}
    algs = {a for _, a in data}
    full = {(s, a): data.get((s, a), 0) for s in samples for a in algs}
    pts = tournament(full)
    strict = sum(1 for s in samples for a in algs for b in algs
                 if full[(s, a)] < full[(s, b)])
    assert sum(pts.values()) == strict


def sweep_case(n=3):
    cores = {f"o{k}": k + 1 for k in range(n)}
    setup = make_setup(cores)
    rng = random.Random(n)
    jobs = [job(i, rng.choice(sorted(cores)), rng.randrange(0, 8) * 1800,
                duration=3600) for i in range(12 * n)]
    return setup, jobs


def test_sweep_two_orgs_has_three_entries():
    setup, jobs = sweep_case(2)
    table = coalition_sweep(setup, jobs, "simpl_direct")
    assert set(table.waits) == {frozenset({"o0"}), frozenset({"o1"}),
                                frozenset({"o0", "o1"})}
    for key, vec in table.waits.items():
        assert set(vec) == key
        assert all(w >= 0 for w in vec.values())


def test_singleton_value_is_local_schedule():
    setup, jobs = sweep_case(3)
    table = coalition_sweep(setup, jobs, "fairshare")
    alone = run_simulation(setup.restricted(["o1"]),
                           [j for j in jobs if j.owner == "o1"], "fairshare")
    assert table.value(["o1"]) == alone.total_wait


def test_five_orgs_give_31_coalitions():
    setup, jobs = sweep_case(5)
    table = coalition_sweep(setup, jobs, "orig_direct")
    assert len(table.waits) == 31
    assert table.missing() == []


def test_parallel_sweep_equals_sequential():
    setup, jobs = sweep_case(3)
    assert coalition_sweep(setup, jobs, "rel_direct", 4, workers=2) == \
        coalition_sweep(setup, jobs, "rel_direct", 4)


def test_enumeration_guard():
    setup = make_setup({f"o{k}": 1 for k in range(21)})
    with pytest.raises(ValueError, match="Monte-Carlo"):
        coalition_sweep(setup, [], "fairshare")


def test_table_round_trip_and_efficiency():
    setup, jobs = sweep_case(3)
    table = coalition_sweep(setup, jobs, "orig_direct")
    again = CoalitionTable.from_dict(table.to_dict())
    assert again == table
    phi = shapley(again)
    assert sum(phi.values()) == table.value(setup.org_ids)


def test_table_with_missing_coalition():
    table = CoalitionTable.from_dict({
        "organizations": ["1", "2", "3"],
        "coalitions": [{"members": m, "value": 1} for m in
                       (["1"], ["2"], ["3"], ["1", "2"], ["2", "3"], ["1", "2", "3"])]})
    with pytest.raises(IncompleteTableError, match=r"missing coalition \{1,3\}"):
        shapley(table)
