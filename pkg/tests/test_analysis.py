import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agc.analysis import (
    OrgLevel,
    extract_network,
    is_closed,
    is_self_maintaining,
    order_parameter,
    organization_level,
    organization_report,
    species_series,
)
from agc.errors import CorruptTrace, ProbeBudgetExceeded
from agc.membrane import parse_membrane
from agc.molecule import canonical_species_id, parse_molecule
from agc.multiset import Multiset
from agc.psystem import PSystem, parse_evolution_rule, run_psystem
from agc.reaction import parse_reaction_rule
from agc.reactor import Params, ReactorState, run_reactor
from agc.trace import Snapshot, Trace, parse_trace, trace_to_jsonl
from helpers import brute_closed, brute_maintaining

A = parse_molecule("atoms: A")
B = parse_molecule("atoms: B")
C = parse_molecule("atoms: C")
D = parse_molecule("atoms: D")
AB = parse_molecule("atoms: A,B ; bonds: 0-1:0.5")
CD = parse_molecule("atoms: C,D ; bonds: 0-1:0.5")
COOL = parse_reaction_rule("rule cool: (a: A)! + (b: B)! => bond a.A-b.B 0.5 ; kind=cooling")
MELT = parse_reaction_rule("rule melt: (m: A-B) => heat 1.0 ; kind=heating")
REP = parse_reaction_rule("rule rep: (m: A) => copy m")


def key(m):
    return canonical_species_id(m).short


POOL = [
    "rule cool: (p: x=A) + (q: y=B) => bond p.x-q.y 0.5 ; kind=cooling",
    "rule melt: (m: *) => heat 0.7 ; kind=heating",
    "rule hot: (m: *) => heat 1.0 ; kind=heating",
    "rule rep: (m: A-B) => copy m",
    "rule swap: (p: A-B w) + (q: C)! => break p.A-p.B ; bond p.B-q.C 0.8",
    "rule grow: (p: A)! => add B",
    "rule eat: (m: B)! + (n: A)! => delete m",
    "rule tune: (m: x=A, y=*, x-y w) | w < 0.7 => set m.x-m.y w + 0.3",
    "rule link: (p: x=C) + (q: y=*) | atoms(q) <= 2 => bond p.x-q.y 0.5",
]
SPECIES = [A, B, C, AB, CD,
           parse_molecule("atoms: B,C ; bonds: 0-1:0.8"),
           parse_molecule("atoms: A,B ; bonds: 0-1:0.8"),
           parse_molecule("atoms: A,B,C ; bonds: 0-1:0.5, 1-2:0.8"),
           parse_molecule("atoms: A,C ; bonds: 0-1:0.5")]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(range(len(SPECIES))), min_size=0, max_size=8, unique=True),
       st.lists(st.sampled_from(range(len(POOL))), min_size=0, max_size=6, unique=True))
def test_closure_and_maintenance_match_brute_force(sp, rl):
    species = [SPECIES[i] for i in sp]
    rules = [parse_reaction_rule(POOL[i]) for i in rl]
    assert is_closed(species, rules) == brute_closed(species, rules)
    assert is_self_maintaining(species, rules) == brute_maintaining(species, rules)
    rep = organization_report(species, rules)
    if rep.level == OrgLevel.LEVEL1:
        assert rep.closed and rep.self_maintaining


def test_closure_examples():
    assert is_closed([A], [])
    assert not is_closed([A, B], [COOL])
    assert is_closed([A, B, AB], [COOL, MELT])


def test_self_maintenance_examples():
    triple = parse_reaction_rule("rule t: (m: A)! + (n: A)! => copy m ; copy n ; delete m ; delete n ; add A ; add A ; add A")
    assert is_self_maintaining([A], [triple])
    assert not is_self_maintaining([A, B], [REP])
    assert is_self_maintaining([], [COOL])


def test_probe_budget_is_reported():
    many = parse_reaction_rule("rule r: (m: x=*, y=*) => heat 1.0")
    chain = parse_molecule("atoms: A,A,A,A,A,A ; bonds: 0-1:0.5, 1-2:0.5, 2-3:0.5, 3-4:0.5, 4-5:0.5")
    with pytest.raises(ProbeBudgetExceeded):
        is_closed([chain], [many], probe_depth=5)


def test_organization_levels():
    assert organization_level([A, B, AB], [COOL, MELT]) == OrgLevel.LEVEL1
    rep = organization_report([A], [REP])
    assert rep.level == OrgLevel.LEVEL0 and rep.replicators == [key(A)]
    assert organization_level([A, B], [COOL]) == OrgLevel.NONE
    assert organization_level([], []) == OrgLevel.NONE


def test_level2_candidate():
    rules = [
        COOL, MELT,
        parse_reaction_rule("rule cool2: (c: C)! + (d: D)! => bond c.C-d.D 0.5"),
        parse_reaction_rule("rule melt2: (m: C-D) => heat 1.0"),
        parse_reaction_rule("rule ab_feeds: (p: A-B)! + (q: C)! => heat 1.0 ; add D"),
        parse_reaction_rule("rule cd_feeds: (p: C-D)! + (q: A)! => heat 1.0 ; add B"),
    ]
    rep = organization_report([A, B, AB, C, D, CD], rules)
    assert rep.level == OrgLevel.LEVEL2_CANDIDATE
    left, right = rep.level2_pair
    assert not set(left) & set(right)
    assert {frozenset(left), frozenset(right)} == {frozenset(map(key, (A, B, AB))), frozenset(map(key, (C, D, CD)))}
    # without the cross feeding there are two independent level-1 sets only
    assert organization_level([A, B, AB, C, D, CD], rules[:4]) == OrgLevel.LEVEL1


def test_organization_from_trace():
    state = ReactorState.create([(A, 20), (B, 20), (AB, 5)], [COOL, MELT], 1, Params())
    trace = run_reactor(state, 1, 300)
    assert organization_level(trace, [COOL, MELT]) == OrgLevel.LEVEL1


@pytest.mark.parametrize("kinds, expected", [
    (["heating"] * 4 + ["cooling"] * 2, 2.0),
    (["cooling"] * 3, 0.0),
    (["heating"] * 2, math.inf),
    ([], None),
    (["general"], None),
])
def test_order_parameter(kinds, expected):
    rules = [parse_reaction_rule(f"rule r{k}: (m: A) => heat 1.0 ; kind={kd}") for k, kd in enumerate(kinds)]
    assert order_parameter(rules) == expected


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["heating", "cooling", "general"]), max_size=10), st.randoms())
def test_order_parameter_reorder_invariant(kinds, rnd):
    rules = [parse_reaction_rule(f"rule r{k}: (m: A) => heat 1.0 ; kind={kd}") for k, kd in enumerate(kinds)]
    shuffled = list(rules)
    rnd.shuffle(shuffled)
    assert order_parameter(rules) == order_parameter(shuffled)


def doubling_trace(steps):
    ms = parse_membrane("[1 ]1")
    system = PSystem(frozenset("a"), ms, {1: Multiset(["a"])}, {1: (parse_evolution_rule("a -> a a @ 1", "a"),)}, 1)
    return run_psystem(system, 0, steps)


def test_species_series_doubling():
    rows = species_series(doubling_trace(3))
    assert [(r.step, r.count) for r in rows] == [(0, 1), (1, 2), (2, 4), (3, 8)]
    assert [r.step for r in species_series(doubling_trace(6), 2)] == [0, 2, 4, 6]


def test_species_series_totals_match_snapshots():
    state = ReactorState.create([(A, 20), (B, 20)], [COOL, MELT], 3, Params())
    trace = run_reactor(state, 3, 200)
    totals = Counter()
    for r in species_series(trace):
        totals[r.step] += r.count
    for snap in trace.snapshots:
        assert totals[snap.step] == snap.stats[1]["molecules"]


def test_species_series_empty_and_corrupt():
    assert species_series(Trace(mode="reactor", seed=0)) == []
    bad = Trace(mode="reactor", seed=0)
    bad.snapshots = [Snapshot(step=5, regions={1: {"x": 1}}), Snapshot(step=2, regions={1: {"x": 1}})]
    with pytest.raises(CorruptTrace):
        species_series(bad)
    bad.snapshots = [Snapshot(step=0, regions={1: {"x": -1}})]
    with pytest.raises(CorruptTrace):
        species_series(bad)


def test_extract_network_single_cooling():
    state = ReactorState.create([(A, 1), (B, 1)], [COOL], 0, Params())
    trace = run_reactor(state, 0, 5)
    net = extract_network(trace)
    assert net.species == {key(A), key(B), key(AB)}
    assert net.reactions == {(tuple(sorted([key(A), key(B)])), (key(AB),))}
    text = net.to_text(trace.species)
    assert "# reactions 1" in text


def test_extract_network_replay_and_coverage():
    def run():
        return run_reactor(ReactorState.create([(A, 15), (B, 15)], [COOL, MELT], 9, Params()), 9, 400)

    a, b = run(), run()
    assert extract_network(a) == extract_network(b)
    net = extract_network(parse_trace(trace_to_jsonl(a)))
    assert net == extract_network(a)
    seen = {s for snap in a.snapshots for r in snap.regions.values() for s in r}
    for rec in a.event_records():
        for lhs, rhs in rec["reactions"]:
            seen.update(lhs, rhs)
    assert net.species <= seen
