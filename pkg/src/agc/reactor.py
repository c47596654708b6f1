"""Well-stirred stochastic reactor over a population of molecules.

One step: choose a rule with probability proportional to its weight, draw
a reactant tuple uniformly (without replacement, by molecule instance),
and try the rule.  On success a batch size ``k`` is drawn uniformly from
``1..min(max_batch, disjoint tuples available)`` and the rule is applied
to ``k`` tuples of the same species.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPopulation
from .molecule import DEFAULT_MAX_ATOMS, DEFAULT_TOLERANCE, Molecule, SpeciesId, canonical_species_id, format_molecule
from .reaction import DEFAULT_MAX_PRODUCTS, ReactionRule, react
from .trace import Snapshot, Trace


@dataclass
class Params:
    weight_tolerance: float = DEFAULT_TOLERANCE
    max_atoms: int = DEFAULT_MAX_ATOMS
    max_batch: int = 8
    max_products: int = DEFAULT_MAX_PRODUCTS
    sample_every: int = 1
    region_selection: str = "uniform"  # or "population"


class Population:
    """Molecule multiset keyed by species, one exemplar per species."""

    def __init__(self, params: Params | None = None):
        self.params = params or Params()
        self.counts: dict[SpeciesId, int] = {}
        self.exemplars: dict[SpeciesId, Molecule] = {}

    def species_of(self, m: Molecule) -> SpeciesId:
        return canonical_species_id(m, self.params.weight_tolerance, self.params.max_atoms)

    def add(self, m: Molecule, n: int = 1) -> SpeciesId:
        sid = self.species_of(m)
        self.add_species(sid, m, n)
        return sid

    def add_species(self, sid: SpeciesId, exemplar: Molecule, n: int = 1) -> None:
        if n <= 0:
            return
        if sid not in self.counts:
            self.counts[sid] = 0
            self.exemplars[sid] = exemplar
        self.counts[sid] += n

    def remove(self, sid: SpeciesId, n: int = 1) -> None:
        have = self.counts.get(sid, 0)
        if have < n:
            raise ValueError(f"cannot remove {n} of species {sid}, only {have} present")
        if have == n:
            del self.counts[sid]
            del self.exemplars[sid]
        else:
            self.counts[sid] = have - n

    def size(self) -> int:
        return sum(self.counts.values())

    def atom_count(self) -> int:
        return sum(len(self.exemplars[s].atoms) * n for s, n in self.counts.items())

    def atom_multiset(self) -> Counter:
        out: Counter = Counter()
        for s, n in self.counts.items():
            for a, k in Counter(self.exemplars[s].atoms).items():
                out[a] += k * n
        return out

    def merge_from(self, other: "Population") -> None:
        for sid, n in other.counts.items():
            self.add_species(sid, other.exemplars[sid], n)

    def copy(self) -> "Population":
        p = Population(self.params)
        p.counts = dict(self.counts)
        p.exemplars = dict(self.exemplars)
        return p

    def draw(self, k: int, rng: np.random.Generator) -> list[SpeciesId] | None:
        """Draw *k* molecule instances uniformly without replacement."""
        total = self.size()
        if total < k:
            return None
        taken: Counter = Counter()
        out = []
        for _ in range(k):
            r = int(rng.integers(total))
            for sid, n in self.counts.items():
                n -= taken[sid]
                if r < n:
                    out.append(sid)
                    taken[sid] += 1
                    break
                r -= n
            total -= 1
        return out

    def species_counts(self) -> dict[str, int]:
        return {s.short: n for s, n in sorted(self.counts.items(), key=lambda kv: kv[0].short)}


@dataclass
class ReactorEvent:
    step: int
    rule: str | None
    reactants: list[SpeciesId] = field(default_factory=list)
    applications: list[list[SpeciesId]] = field(default_factory=list)   # products per application
    batch: int = 0
    reason: str = "ok"
    region: int | None = None
    product_molecules: list[list[Molecule]] = field(default_factory=list, repr=False, compare=False)

    @property
    def success(self) -> bool:
        return bool(self.applications)

    def to_record(self) -> dict:
        reacts = sorted(s.short for s in self.reactants)
        rec = {
            "type": "event",
            "kind": "reaction" if self.success else "null",
            "step": self.step,
            "rule": self.rule,
            "reactants": reacts,
            "batch": self.batch,
            "applied": len(self.applications),
            "reason": self.reason,
            "reactions": [[reacts, sorted(s.short for s in prods)] for prods in self.applications],
        }
        if self.region is not None:
            rec["region"] = self.region
        return rec


@dataclass
class ReactorState:
    population: Population
    rules: list[ReactionRule]
    rng: np.random.Generator
    params: Params = field(default_factory=Params)
    step_index: int = 0
    applied: Counter = field(default_factory=Counter)
    failed: Counter = field(default_factory=Counter)

    @classmethod
    def create(cls, molecules, rules, seed, params: Params | None = None) -> "ReactorState":
        params = params or Params()
        pop = Population(params)
        for m, n in molecules:
            pop.add(m, n)
        return cls(pop, list(rules), np.random.default_rng(seed), params)


def choose_rule(rules: list[ReactionRule], rng: np.random.Generator) -> int:
    weights = np.array([r.probability_weight for r in rules], dtype=float)
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def attempt(pop: Population, rule: ReactionRule, rng: np.random.Generator, params: Params,
            step: int) -> ReactorEvent:
    """Draw a tuple for *rule* and apply it in a batch.

    Reactants are removed from *pop*; products are left to the caller, whose
    routing decides where they go.
    """
    tup = pop.draw(rule.arity, rng)
    if tup is None:
        return ReactorEvent(step, rule.name, reason="insufficient")
    reactants = [pop.exemplars[s] for s in tup]
    first = react(rule, reactants, rng, params.max_products)
    if not first.ok:
        return ReactorEvent(step, rule.name, list(tup), reason=first.reason)
    need = Counter(tup)
    available = min(pop.counts[s] // q for s, q in need.items())
    k = 1 + int(rng.integers(min(params.max_batch, available)))
    outcomes = [first.products]
    for _ in range(k - 1):
        out = react(rule, reactants, rng, params.max_products)
        if out.ok:
            outcomes.append(out.products)
    event = ReactorEvent(step, rule.name, list(tup), batch=k)
    for prods in outcomes:
        for s in tup:
            pop.remove(s)
        ids = []
        for m in prods:
            ids.append(pop.species_of(m))
        event.applications.append(ids)
        event.product_molecules.append(prods)
    return event


def reactor_step(state: ReactorState) -> tuple[ReactorState, ReactorEvent]:
    """Advance *state* by one attempt, in place."""
    if state.population.size() == 0:
        raise EmptyPopulation("reactor population is empty")
    state.step_index += 1
    if not state.rules:
        return state, ReactorEvent(state.step_index, None, reason="no-rules")
    rule = state.rules[choose_rule(state.rules, state.rng)]
    event = attempt(state.population, rule, state.rng, state.params, state.step_index)
    for prods, ids in zip(event.product_molecules, event.applications):
        for m, sid in zip(prods, ids):
            state.population.add_species(sid, m)
    if event.success:
        state.applied[rule.name] += len(event.applications)
    else:
        state.failed[rule.name] += 1
    return state, event


def snapshot_population(step: int, pops: dict[int, Population], trace: Trace, structure: str | None = None) -> Snapshot:
    regions = {}
    stats = {}
    for label, pop in sorted(pops.items()):
        for sid, m in pop.exemplars.items():
            if sid.short not in trace.species:
                trace.species[sid.short] = format_molecule(m)
        regions[label] = pop.species_counts()
        stats[label] = {"molecules": pop.size(), "atoms": pop.atom_count()}
    return Snapshot(step=step, regions=regions, structure=structure, stats=stats)


def run_reactor(initial: ReactorState, seed: int | None = None, max_steps: int = 0) -> Trace:
    """Iterate :func:`reactor_step`; *seed*, when given, reseeds the state's generator."""
    state = initial
    if seed is not None:
        state.rng = np.random.default_rng(seed)
    every = max(1, state.params.sample_every)
    trace = Trace(mode="reactor", seed=seed)
    pops = {1: state.population}
    trace.snapshots.append(snapshot_population(state.step_index, pops, trace))
    reason = "max-steps"
    while state.step_index < max_steps:
        if state.population.size() == 0:
            reason = "empty-population"
            break
        state, event = reactor_step(state)
        trace.events.append(event)
        note_species(trace, event)
        if state.step_index % every == 0 or state.step_index == max_steps:
            trace.snapshots.append(snapshot_population(state.step_index, pops, trace))
    if trace.snapshots[-1].step != state.step_index:
        trace.snapshots.append(snapshot_population(state.step_index, pops, trace))
    trace.reason = reason
    return trace


def note_species(trace: Trace, event: ReactorEvent) -> None:
    # products consumed within the sampling interval still need a species record
    for ids, mols in zip(event.applications, event.product_molecules):
        for sid, m in zip(ids, mols):
            if sid.short not in trace.species:
                trace.species[sid.short] = format_molecule(m)
