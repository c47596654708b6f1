import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agc.errors import ArityMismatch, InvalidProduct, ParseError, ProbeBudgetExceeded, UnboundVariable
from agc.molecule import canonical_species_id, cool, heat, parse_molecule
from agc.reaction import (
    AddAtom,
    Binding,
    ReactionRule,
    apply_reaction,
    enumerate_bindings,
    enumerate_embeddings,
    evaluate_guard,
    is_applicable,
    match_reactants,
    parse_guard,
    parse_reaction_rule,
    react,
    rule_diagnostics,
)
from helpers import atom_multiset, random_molecule

SWAP = "rule swap: (m1: A-B w1) + (m2: C) | 0.8 > w1 => break m1.A-m1.B ; bond m1.B-m2.C 0.8 ; p=0.3 ; conserve"


def mol(text):
    return parse_molecule(text)


def species(mols):
    return sorted(canonical_species_id(m) for m in mols)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_binding_unique_embedding():
    rule = parse_reaction_rule("rule r: (m: x=A, y=B, x-y w in [0, 1]) => heat 0.6")
    b = match_reactants(rule, [mol("atoms: A,B ; bonds: 0-1:0.5")], rng())
    assert b.embeddings[0] == {"x": 0, "y": 1}
    assert b.weights == {"w": 0.5}
    assert match_reactants(rule, [mol("atoms: C,C ; bonds: 0-1:0.5")], rng()) is None
    # weight outside the range
    assert match_reactants(rule, [mol("atoms: A,B ; bonds: 0-1:1.5")], rng()) is None


def test_embedding_choice_is_uniform():
    rule = parse_reaction_rule("rule r: (m: x=A, y=B, x-y w in [0, 1]) => heat 0.6")
    m = mol("atoms: A,B,A ; bonds: 0-1:0.5, 1-2:0.5")
    g = rng(42)
    n = 10_000
    hits = Counter(match_reactants(rule, [m], g).embeddings[0]["x"] for _ in range(n))
    assert set(hits) == {0, 2}
    sigma = math.sqrt(0.25 / n)
    assert abs(hits[0] / n - 0.5) < 3 * sigma


def test_arity_mismatch():
    rule = parse_reaction_rule(SWAP)
    with pytest.raises(ArityMismatch):
        match_reactants(rule, [mol("atoms: A")], rng())


def test_guard_examples():
    b = Binding(({},), weights={"w_new": 0.9, "w_old": 0.2})
    assert evaluate_guard(parse_guard("w_new > w_old"), b)
    assert evaluate_guard(parse_guard("true"), b)
    assert evaluate_guard(parse_guard("w_new + w_old >= 1.1 and not w_old = 0.3"), b)
    assert not evaluate_guard(parse_guard("w_new < 0.5 or false"), b)
    with pytest.raises(UnboundVariable):
        evaluate_guard(parse_guard("z > 0"), b)


def test_guard_atom_count():
    rule = parse_reaction_rule("rule r: (m: A) | atoms(m) >= 3 => heat 1.0")
    assert react(rule, [mol("atoms: A,B ; bonds: 0-1:0.5")], rng()).reason == "guard"
    assert react(rule, [mol("atoms: A,B,B ; bonds: 0-1:0.5, 1-2:0.5")], rng()).ok


def test_swap_example():
    rule = parse_reaction_rule(SWAP)
    reactants = [mol("atoms: A,B ; bonds: 0-1:0.5"), mol("atoms: C")]
    before = list(reactants)
    products = apply_reaction(rule, reactants, rng())
    assert species(products) == species([mol("atoms: A"), mol("atoms: B,C ; bonds: 0-1:0.8")])
    assert atom_multiset(products) == atom_multiset(reactants)
    assert reactants == before


def test_guard_false_not_applicable():
    rule = parse_reaction_rule(SWAP)
    reactants = [mol("atoms: A,B ; bonds: 0-1:0.9"), mol("atoms: C")]
    out = react(rule, reactants, rng())
    assert not out.ok and out.reason == "guard"


def test_exact_pattern():
    rule = parse_reaction_rule("rule cool: (a: A)! + (b: B)! => bond a.A-b.B 0.5")
    assert apply_reaction(rule, [mol("atoms: A"), mol("atoms: B")], rng()) == [mol("atoms: A,B ; bonds: 0-1:0.5")]
    assert react(rule, [mol("atoms: A,B ; bonds: 0-1:0.5"), mol("atoms: B")], rng()).reason == "no-match"


def test_copy_add_delete():
    g = rng()
    a = mol("atoms: A")
    assert species(apply_reaction(parse_reaction_rule("rule r: (m: A) => copy m"), [a], g)) == species([a, a])
    assert species(apply_reaction(parse_reaction_rule("rule r: (m: A) => add B"), [a], g)) == species([a, mol("atoms: B")])
    assert apply_reaction(parse_reaction_rule("rule r: (m: A) => delete m"), [a], g) == []


def test_heat_rule_no_change_is_not_applicable():
    rule = parse_reaction_rule("rule h: (m: *) => heat 1.0 ; kind=heating")
    assert react(rule, [mol("atoms: A")], rng()).reason == "no-change"


def test_product_limit():
    rule = parse_reaction_rule("rule burst: (m: A) => heat 2.0")
    star = parse_molecule("atoms: A,B,B,B,B ; bonds: 0-1:1, 0-2:1, 0-3:1, 0-4:1")
    assert react(rule, [star], rng(), max_products=3).reason == "product-limit"
    assert len(react(rule, [star], rng(), max_products=5).products) == 5


def test_invalid_product_reported_with_rule_name():
    rule = parse_reaction_rule("rule twice: (m: x=A, y=B) => bond m.x-m.y 1.0")
    with pytest.raises(InvalidProduct) as info:
        apply_reaction(rule, [mol("atoms: A,B ; bonds: 0-1:0.5")], rng())
    assert info.value.rule == "twice"
    bad = ReactionRule("grow", parse_reaction_rule("rule g: (m: A) => heat 1").reactant_patterns,
                       actions=(AddAtom("B"),), conserves_atoms=True)
    with pytest.raises(InvalidProduct):
        apply_reaction(bad, [mol("atoms: A")], rng())


def test_probe_budget():
    rule = parse_reaction_rule("rule r: (m: x=*, y=*) => heat 1.0")
    big = mol("atoms: A,A,A,A,A")
    with pytest.raises(ProbeBudgetExceeded):
        list(enumerate_bindings(rule, [big], limit=10))
    assert len(list(enumerate_bindings(rule, [big], limit=20))) == 20


@pytest.mark.parametrize("text", [
    SWAP,
    "rule cool: (a: A)! + (b: B)! => bond a.A-b.B 0.5 ; kind=cooling",
    "rule h: (m: *) => heat 1.0 ; kind=heating",
    "rule rep: (m: A) => copy m",
    "rule g: (m: x=A, y=*, x-y w in [0.1, 0.9]) | not (w <= 0.2 or atoms(m) > 4) => set m.x-m.y w + 0.1 ; p=2.5",
    "rule r @ 2: (m: A) => add B ; route out, in_3 ; delta",
])
def test_text_roundtrip(text):
    rule = parse_reaction_rule(text, allow_region=True)
    assert parse_reaction_rule(str(rule), allow_region=True) == rule


@pytest.mark.parametrize("text, code", [
    ("rule r: (m: A) => explode", "unknown-action"),
    ("rule r (m: A) => heat 1", "rule-syntax"),
    ("rule r: (m: A-B-C w) => heat 1", "rule-syntax"),
    ("rule r @ 2: (m: A) => heat 1", "unexpected-region"),
    ("rule r: (m: A, q) => heat 1", "unbound-variable"),
    ("rule r: (m: A) => heat 1 ; kind=lukewarm", "bad-kind"),
    ("rule r: (m: A) => heat 1 ; p=0", "bad-weight"),
])
def test_parse_errors(text, code):
    with pytest.raises(ParseError) as info:
        parse_reaction_rule(text)
    assert info.value.code == code
    assert 1 <= info.value.col <= len(text) + 1


@pytest.mark.parametrize("text, code", [
    ("rule r: (m: A) | w > 1 => heat 1", "unbound-variable"),
    ("rule r: (m: A) => copy q", "unbound-variable"),
    ("rule r: (m: x=A, y=B) => break m.x-m.y", "unmatched-bond"),
    ("rule r: (m: A) => copy m ; conserve", "not-conservative"),
    ("rule r: (m: A) + (m: B) => heat 1", "duplicate-variable"),
])
def test_diagnostics(text, code):
    codes = [d.code for d in rule_diagnostics(parse_reaction_rule(text))]
    assert code in codes


molecules = st.builds(lambda seed, n: random_molecule(np.random.default_rng(seed), n, weights=(0.3, 0.8, 1.2)),
                      st.integers(0, 2**32 - 1), st.integers(1, 8))


@settings(max_examples=100, deadline=None)
@given(molecules, st.sampled_from([0.5, 1.0, 1.5]))
def test_heating_rule_agrees_with_heat(m, t):
    rule = parse_reaction_rule(f"rule h: (m: *) => heat {t} ; kind=heating")
    out = react(rule, [m], rng())
    expected = heat(m, t)
    if any(w < t for _, _, w in m.bonds):
        assert species(out.products) == species(expected)
    else:
        assert out.reason == "no-change" and len(expected) == 1


@settings(max_examples=100, deadline=None)
@given(molecules, molecules, st.integers(0, 1000))
def test_cooling_rule_agrees_with_cool(a, b, seed):
    rule = parse_reaction_rule("rule c: (p: x=*) + (q: y=*) => bond p.x-q.y 0.4 ; kind=cooling")
    binding = match_reactants(rule, [a, b], rng(seed))
    i, j = binding.embeddings[0]["x"], binding.embeddings[1]["y"]
    out = react(rule, [a, b], rng(seed))
    assert species(out.products) == species([cool(a, b, i, j, 0.4)])


@settings(max_examples=100, deadline=None)
@given(molecules, molecules)
def test_symmetric_rule_applicability(a, b):
    rule = parse_reaction_rule("rule s: (p: A-B w1) + (q: A-B w2) | w1 + w2 > 1.0 => heat 1.0")
    assert is_applicable(rule, [a, b], limit=10_000) == is_applicable(rule, [b, a], limit=10_000)


@settings(max_examples=100, deadline=None)
@given(molecules, molecules)
def test_conserving_rule_preserves_atoms(a, b):
    rule = parse_reaction_rule("rule c: (p: x=*) + (q: y=*) => bond p.x-q.y 0.4 ; heat 0.5 ; conserve")
    out = react(rule, [a, b], rng())
    if out.ok:
        assert atom_multiset(out.products) == atom_multiset([a, b])


def test_embeddings_are_injective():
    pattern = parse_reaction_rule("rule r: (m: x=A, y=A) => heat 1").reactant_patterns[0]
    embs = enumerate_embeddings(pattern, mol("atoms: A,A,A"))
    assert len(embs) == 6 and all(e["x"] != e["y"] for e in embs)
