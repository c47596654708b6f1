"""Probabilistic P system whose regions hold molecule populations.

Each step picks one non-empty region, runs one reactor attempt there with
that region's rules, routes the products (here / out / in_j) and, when the
applied rule dissolves, merges the region into its parent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllRegionsEmpty, Diagnostic, SkinDissolution, ValidationErrors
from .membrane import MembraneStructure, canonical_text, dissolve_membrane
from .molecule import Molecule, format_molecule
from .reaction import ReactionRule
from .reactor import Params, Population, ReactorEvent, attempt, choose_rule, note_species, snapshot_population
from .trace import Trace


@dataclass
class AgcSystem:
    structure: MembraneStructure
    region_populations: dict[int, list[tuple[Molecule, int]]]
    region_rules: dict[int, list[ReactionRule]]
    params: Params = field(default_factory=Params)

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValidationErrors(problems)

    def validate(self) -> list[Diagnostic]:
        out = []
        ms = self.structure
        for label in self.region_populations:
            if label not in ms:
                out.append(Diagnostic("unknown-label", f"population given for missing membrane {label}"))
        for label, rules in self.region_rules.items():
            if label not in ms:
                out.append(Diagnostic("unknown-label", f"rules given for missing membrane {label}"))
                continue
            for rule in rules:
                if rule.dissolves and label == ms.skin:
                    out.append(Diagnostic("skin-dissolution", f"rule {rule.name!r} would dissolve the skin"))
                for tgt in rule.routing:
                    if tgt.kind == "in" and tgt.label not in ms:
                        out.append(Diagnostic("unknown-label", f"rule {rule.name!r} routes into missing membrane {tgt.label}"))
        return out

    def initial_configuration(self) -> "AgcConfiguration":
        pops = {}
        for label in self.structure.labels:
            pop = Population(self.params)
            for m, n in self.region_populations.get(label, ()):
                pop.add(m, n)
            pops[label] = pop
        return AgcConfiguration(
            structure=self.structure,
            populations=pops,
            rules={lab: list(self.region_rules.get(lab, ())) for lab in self.structure.labels},
            params=self.params,
            expelled=Population(self.params),
        )


@dataclass
class AgcConfiguration:
    structure: MembraneStructure
    populations: dict[int, Population]
    rules: dict[int, list[ReactionRule]]
    params: Params
    expelled: Population
    step_index: int = 0

    def total_molecules(self) -> int:
        return sum(p.size() for p in self.populations.values()) + self.expelled.size()


@dataclass
class AgcEvent:
    reaction: ReactorEvent
    region: int
    routed: list[tuple[str, int | None]] = field(default_factory=list)   # (species, destination or None=expelled)
    dissolved: int | None = None

    @property
    def step(self) -> int:
        return self.reaction.step

    def to_record(self) -> dict:
        rec = self.reaction.to_record()
        rec["region"] = self.region
        rec["routed"] = [[sid, "expelled" if dest is None else dest] for sid, dest in self.routed]
        if self.dissolved is not None:
            rec["dissolved"] = self.dissolved
        return rec


def _targets_valid(rule: ReactionRule, region: int, structure: MembraneStructure) -> bool:
    kids = structure.children(region)
    return all(t.kind != "in" or t.label in kids for t in rule.routing)


def _pick_region(config: AgcConfiguration, rng: np.random.Generator) -> int:
    candidates = [lab for lab in sorted(config.populations) if config.populations[lab].size() > 0]
    if not candidates:
        raise AllRegionsEmpty("no region holds any molecule")
    if len(candidates) == 1:
        return candidates[0]
    if config.params.region_selection == "population":
        sizes = np.cumsum([config.populations[lab].size() for lab in candidates])
        return candidates[int(np.searchsorted(sizes, rng.random() * sizes[-1], side="right"))]
    return candidates[int(rng.integers(len(candidates)))]


def agc_step(config: AgcConfiguration, rng: np.random.Generator) -> tuple[AgcConfiguration, AgcEvent]:
    """One asynchronous reaction step, applied to *config* in place."""
    region = _pick_region(config, rng)
    config.step_index += 1
    step = config.step_index
    rules = config.rules[region]
    if not rules:
        return config, AgcEvent(ReactorEvent(step, None, reason="no-rules", region=region), region)
    rule = rules[choose_rule(rules, rng)]
    if not _targets_valid(rule, region, config.structure):
        return config, AgcEvent(ReactorEvent(step, rule.name, reason="target", region=region), region)
    pop = config.populations[region]
    reaction = attempt(pop, rule, rng, config.params, step)
    reaction.region = region
    event = AgcEvent(reaction, region)
    parent = config.structure.parent(region)
    for prods, ids in zip(reaction.product_molecules, reaction.applications):
        for k, (m, sid) in enumerate(zip(prods, ids)):
            tgt = rule.target_for(k)
            if tgt.kind == "here":
                dest = region
            elif tgt.kind == "out":
                dest = parent
            else:
                dest = tgt.label
            (config.expelled if dest is None else config.populations[dest]).add_species(sid, m)
            event.routed.append((sid.short, dest))
    if rule.dissolves and reaction.success:
        if region == config.structure.skin:
            raise SkinDissolution(f"rule {rule.name!r} would dissolve the skin")
        config.populations[parent].merge_from(config.populations.pop(region))
        del config.rules[region]
        config.structure = dissolve_membrane(config.structure, region)
        event.dissolved = region
    return config, event


def _snapshot(config: AgcConfiguration, trace: Trace):
    snap = snapshot_population(config.step_index, config.populations, trace, canonical_text(config.structure))
    snap.expelled = config.expelled.species_counts()
    for sid, m in config.expelled.exemplars.items():
        trace.species.setdefault(sid.short, format_molecule(m))
    return snap


def run_agc(system: AgcSystem, seed: int, max_steps: int) -> Trace:
    rng = np.random.default_rng(seed)
    config = system.initial_configuration()
    every = max(1, system.params.sample_every)
    trace = Trace(mode="agc", seed=seed)
    trace.snapshots.append(_snapshot(config, trace))
    reason = "max-steps"
    while config.step_index < max_steps:
        try:
            config, event = agc_step(config, rng)
        except AllRegionsEmpty:
            reason = "all-regions-empty"
            break
        trace.events.append(event)
        note_species(trace, event.reaction)
        if config.step_index % every == 0 or config.step_index == max_steps:
            trace.snapshots.append(_snapshot(config, trace))
    if trace.snapshots[-1].step != config.step_index:
        trace.snapshots.append(_snapshot(config, trace))
    trace.reason = reason
    trace.configurations = [config]
    return trace
