import numpy as np
import pytest

from agc.errors import (
    AlreadyHalted,
    InvalidCatalystDeclaration,
    OutputRegionDissolved,
    ParseError,
    SkinDissolution,
    ValidationErrors,
)
from agc.membrane import parse_membrane
from agc.multiset import Multiset
from agc.psystem import (
    HERE,
    Configuration,
    PSystem,
    classify_system,
    inside,
    maximal_parallel_step,
    parse_evolution_rule,
    read_output,
    rule_applicable,
    run_psystem,
)
from agc.trace import trace_to_jsonl
from helpers import brute_maximal, random_psystem, total_objects


def system(membrane, contents, rules, output=None, alphabet="abcd", catalysts=None):
    ms = parse_membrane(membrane)
    parsed = [parse_evolution_rule(r, alphabet) for r in rules]
    by_region = {}
    for r in parsed:
        by_region.setdefault(r.region, []).append(r)
    return PSystem(frozenset(alphabet), ms, {k: Multiset.parse(v) for k, v in contents.items()},
                   {k: tuple(v) for k, v in by_region.items()}, output or ms.skin,
                   None if catalysts is None else frozenset(catalysts))


def step(sys_, seed=0):
    return maximal_parallel_step(sys_.initial_configuration(), np.random.default_rng(seed))


def test_rule_text_forms():
    r = parse_evolution_rule("a b -> (b,here) (c,in_2) delta @ region 1 [p=0.5]")
    assert r.lhs == Multiset("ab") and r.radius == 2
    assert r.rhs == (("b", HERE), ("c", inside(2)))
    assert r.dissolves and r.region == 1 and r.probability_weight == 0.5
    assert parse_evolution_rule(str(r)) == r
    # concatenated single-character symbols, bare rhs means here, δ with empty rhs
    r2 = parse_evolution_rule("aa -> ab @ 3", alphabet="ab")
    assert r2.lhs == Multiset({"a": 2}) and r2.rhs == (("a", HERE), ("b", HERE))
    assert parse_evolution_rule("a -> δ @ 2").dissolves


@pytest.mark.parametrize("text, code", [
    ("-> a @ 1", "empty-lhs"),
    ("a -> (b,sideways) @ 1", "unknown-target"),
    ("a -> b", "missing-region"),
    ("a -> b @ 1 [p=0]", "bad-weight"),
    ("a -> b @ 1 junk", "rule-syntax"),
])
def test_rule_parse_errors(text, code):
    with pytest.raises(ParseError) as info:
        parse_evolution_rule(text)
    assert info.value.code == code
    assert info.value.col >= 1


def test_rule_applicable_examples():
    ms = parse_membrane("[1 [2 ]2 [5 [6 ]6 ]5 ]1")
    config = Configuration(ms, {1: Multiset("a"), 2: Multiset(), 5: Multiset(), 6: Multiset()}, {})
    assert rule_applicable(parse_evolution_rule("a -> (b,here) @ 1"), config)
    assert not rule_applicable(parse_evolution_rule("a -> (b,in_6) @ 1"), config)  # 6 is a grandchild
    assert rule_applicable(parse_evolution_rule("a -> (b,in_5) @ 1"), config)
    assert not rule_applicable(parse_evolution_rule("a b -> c @ 1"), config)


def test_single_region_step():
    s = system("[1 ]1", {1: "a:2, c:1"}, ["a -> (b,here) @ 1"])
    config, report = step(s)
    assert config.contents[1] == Multiset.parse("b:2, c:1")
    assert report.applications == {1: {0: 2}}
    assert config.halted


def test_dissolution_merges_into_parent():
    s = system("[1 [2 ]2 ]1", {1: "c:1", 2: "a:1"}, ["a -> (b,here) delta @ 2"])
    config, report = step(s)
    assert config.contents == {1: Multiset.parse("b:1, c:1")}
    assert 2 not in config.structure and 2 not in config.live_rules
    assert report.dissolved == (2,)
    assert config.halted


def test_halted_with_no_rules():
    s = system("[1 ]1", {1: "a:1"}, [])
    config, report = step(s)
    assert config.halted and report.vacuous and config.step_index == 0
    with pytest.raises(AlreadyHalted):
        maximal_parallel_step(config, np.random.default_rng(0))


def test_expelled_objects_counted():
    s = system("[1 ]1", {1: "a:3"}, ["a -> (b,out) (c,here) @ 1"])
    config, report = step(s)
    assert report.expelled == Multiset({"b": 3})
    assert config.expelled == Multiset({"b": 3})
    assert config.contents[1] == Multiset({"c": 3})


def test_same_step_parent_routing_then_cascade():
    # child sends b out to 2 while 2 dissolves; everything ends in the skin
    s = system("[1 [2 [3 ]3 ]2 ]1", {2: "a:1", 3: "a:2"},
               ["a -> (b,out) delta @ 3", "a -> (c,here) delta @ 2"])
    config, report = step(s)
    assert config.contents == {1: Multiset.parse("b:2, c:1")}
    assert set(report.dissolved) == {2, 3}
    assert total_objects(config) == 3


def test_in_target_delivers_next_step_only():
    s = system("[1 [2 ]2 ]1", {1: "a:1"}, ["a -> (b,in_2) @ 1", "b -> (c,here) @ 2"])
    config, _ = step(s)
    assert config.contents[2] == Multiset("b")
    config, _ = maximal_parallel_step(config, np.random.default_rng(1))
    assert config.contents[2] == Multiset("c")


def test_skin_dissolution_rejected():
    with pytest.raises(ValidationErrors) as info:
        system("[1 ]1", {1: "a:1"}, ["a -> b delta @ 1"])
    assert info.value.diagnostics[0].code == "skin-dissolution"
    ms = parse_membrane("[1 ]1")
    rule = parse_evolution_rule("a -> b delta @ 1")
    config = Configuration(ms, {1: Multiset("a")}, {1: (rule,)})
    with pytest.raises(SkinDissolution):
        maximal_parallel_step(config, np.random.default_rng(0))


def test_missing_in_target_rejected():
    with pytest.raises(ValidationErrors):
        system("[1 [2 ]2 ]1", {}, ["a -> (b,in_9) @ 1"])


def test_doubling_counts():
    s = system("[1 ]1", {1: "a:1"}, ["a -> (a,here) (a,here) @ 1"])
    trace = run_psystem(s, seed=5, max_steps=3)
    assert [snap.regions[1].get("a") for snap in trace.snapshots] == [1, 2, 4, 8]


def test_run_no_applicable_rule():
    s = system("[1 ]1", {1: "b:1"}, ["a -> b @ 1"])
    trace = run_psystem(s, seed=1, max_steps=10)
    assert len(trace.snapshots) == 1 and trace.halted


def test_run_deterministic():
    s = system("[1 [2 ]2 ]1", {1: "a:4, b:3"}, ["a -> (b,in_2) @ 1", "a b -> (c,here) @ 1", "b -> (a,out) @ 2"])
    assert trace_to_jsonl(run_psystem(s, 9, 20)) == trace_to_jsonl(run_psystem(s, 9, 20))


def test_sample_every_keeps_final_snapshot():
    s = system("[1 ]1", {1: "a:1"}, ["a -> (a,here) (a,here) @ 1"])
    trace = run_psystem(s, 0, 7, sample_every=3)
    assert [snap.step for snap in trace.snapshots] == [0, 3, 6, 7]


def test_classification():
    assert classify_system(system("[1 ]1", {}, ["a -> (b,here) @ 1"])) == "NonCooperative"
    assert classify_system(system("[1 ]1", {}, ["c a -> (c,here) (b,here) @ 1"], catalysts="c")) == ("Catalytic", frozenset("c"))
    assert classify_system(system("[1 ]1", {}, ["a b -> (c,here) @ 1"])) == "Cooperative"
    with pytest.raises(InvalidCatalystDeclaration):
        classify_system(system("[1 ]1", {}, ["c -> (b,here) @ 1"], catalysts="c"))
    with pytest.raises(InvalidCatalystDeclaration):
        classify_system(system("[1 ]1", {}, ["c a -> (b,here) @ 1"], catalysts="c"))


def test_read_output():
    s = system("[1 [2 ]2 ]1", {2: "b:3"}, [], output=2)
    assert read_output(s.initial_configuration(), s) == Multiset({"b": 3})
    s = system("[1 [2 ]2 ]1", {2: "a:1"}, ["a -> b delta @ 2"], output=2)
    config, _ = step(s)
    with pytest.raises(OutputRegionDissolved):
        read_output(config, s)


def test_random_steps_land_in_brute_force_maximal_set():
    rng = np.random.default_rng(2024)
    for _ in range(150):
        s = random_psystem(rng)
        config = s.initial_configuration()
        if config.halted:
            continue
        try:
            new, report = maximal_parallel_step(config, np.random.default_rng(int(rng.integers(2**31))))
        except SkinDissolution:
            pytest.fail("generator never builds skin dissolution")
        kids = {lab: config.structure.children(lab) for lab in config.structure.labels}
        for label, rules in config.live_rules.items():
            enabled = [all(t.kind != "in" or t.label in kids[label] for _, t in r.rhs) for r in rules]
            vec = tuple(report.applications.get(label, {}).get(k, 0) for k in range(len(rules)))
            assert vec in brute_maximal([r.lhs for r in rules], enabled, config.contents[label])
        # conservation ledger
        produced = sum(len(r.rhs) * n for lab, apps in report.applications.items()
                       for k, n in apps.items() for r in [config.live_rules[lab][k]])
        consumed = sum(m.cardinality for m in report.consumed.values())
        assert total_objects(new) == total_objects(config) - consumed + produced
