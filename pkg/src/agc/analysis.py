"""Post-hoc analysis of traces and species sets.

Closure and self-maintenance are decided over species exemplars: every
ordered reactant tuple drawn (with repetition) from the set, every
embedding of every rule.  ``probe_depth`` caps the embeddings examined
per (rule, tuple); exceeding it raises :class:`ProbeBudgetExceeded`.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from itertools import combinations, product

from .errors import CorruptTrace
from .molecule import DEFAULT_TOLERANCE, Molecule, canonical_species_id, parse_molecule
from .reaction import DEFAULT_MAX_PRODUCTS, ReactionRule, build_products, enumerate_bindings, evaluate_guard
from .trace import Trace

DEFAULT_PROBE_DEPTH = 10_000
MAX_LEVEL2_SPECIES = 16


@dataclass(frozen=True)
class SeriesRow:
    step: int
    species: str
    count: int
    region: int


def species_series(trace: Trace, interval: int = 1) -> list[SeriesRow]:
    if interval < 1:
        raise ValueError("interval must be positive")
    rows = []
    last = -1
    for snap in trace.snapshots:
        if snap.step < last:
            raise CorruptTrace(f"snapshot steps go backwards at step {snap.step}")
        last = snap.step
        if snap.step % interval:
            continue
        for region in sorted(snap.regions):
            for sp, n in sorted(snap.regions[region].items()):
                if n < 0:
                    raise CorruptTrace(f"negative count for {sp} at step {snap.step}")
                rows.append(SeriesRow(snap.step, sp, n, region))
    return rows


# ---------------------------------------------------------------------------
# reaction instances over a species set


@dataclass(frozen=True)
class Instance:
    rule: str
    reactants: tuple[int, ...]            # indices into the species list
    products: tuple[str, ...]             # species keys (may fall outside the set)

    def net(self, keys: list[str]) -> Counter:
        c = Counter(self.products)
        c.subtract(keys[i] for i in self.reactants)
        return c


class SpeciesSet:
    """Exemplars keyed by canonical species key, in a fixed order."""

    def __init__(self, species: Iterable[Molecule] | Mapping[str, Molecule], tolerance: float = DEFAULT_TOLERANCE):
        mols = list(species.values()) if isinstance(species, Mapping) else list(species)
        self.tolerance = tolerance
        found: dict[str, Molecule] = {}
        for m in mols:
            found.setdefault(self.key(m), m)
        self.keys = sorted(found)
        self.molecules = [found[k] for k in self.keys]
        self.index = {k: i for i, k in enumerate(self.keys)}

    def key(self, m: Molecule) -> str:
        return canonical_species_id(m, self.tolerance).short

    def __len__(self) -> int:
        return len(self.keys)


def reaction_instances(sset: SpeciesSet, rules: Iterable[ReactionRule], probe_depth: int = DEFAULT_PROBE_DEPTH,
                       max_products: int = DEFAULT_MAX_PRODUCTS) -> list[Instance]:
    out = []
    n = len(sset)
    for rule in rules:
        for combo in product(range(n), repeat=rule.arity):
            reactants = [sset.molecules[i] for i in combo]
            for binding in enumerate_bindings(rule, reactants, probe_depth):
                if not evaluate_guard(rule.guard, binding):
                    continue
                outcome = build_products(rule, reactants, binding, max_products)
                if outcome.ok:
                    out.append(Instance(rule.name, combo, tuple(sset.key(m) for m in outcome.products)))
    return out


def _as_set(species, tolerance) -> SpeciesSet:
    return species if isinstance(species, SpeciesSet) else SpeciesSet(species, tolerance)


def is_closed(species, rules, probe_depth: int = DEFAULT_PROBE_DEPTH, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    sset = _as_set(species, tolerance)
    members = set(sset.keys)
    return all(p in members for inst in reaction_instances(sset, rules, probe_depth) for p in inst.products)


def is_self_maintaining(species, rules, probe_depth: int = DEFAULT_PROBE_DEPTH,
                        tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Every member has net positive production in some applicable reaction among members."""
    sset = _as_set(species, tolerance)
    produced = set()
    for inst in reaction_instances(sset, rules, probe_depth):
        produced.update(k for k, d in inst.net(sset.keys).items() if d > 0)
    return all(k in produced for k in sset.keys)


class OrgLevel(str, enum.Enum):
    NONE = "None"
    LEVEL0 = "Level0"
    LEVEL1 = "Level1"
    LEVEL2_CANDIDATE = "Level2-candidate"

    def __str__(self) -> str:
        return self.value


@dataclass
class OrganizationReport:
    level: OrgLevel
    closed: bool
    self_maintaining: bool
    replicators: list[str] = field(default_factory=list)
    level1_sets: list[tuple[str, ...]] = field(default_factory=list)
    level2_pair: tuple[tuple[str, ...], tuple[str, ...]] | None = None


def _is_replication(inst: Instance, keys: list[str], k: str) -> bool:
    before = sum(1 for i in inst.reactants if keys[i] == k)
    after = inst.products.count(k)
    return before >= 1 and after >= 2 and after > before


class _SubsetOracle:
    """Closure / maintenance tests on subsets, as bitmasks over one instance list."""

    def __init__(self, sset: SpeciesSet, instances: list[Instance]):
        self.keys = sset.keys
        self.rows = []
        for inst in instances:
            rmask = 0
            for i in inst.reactants:
                rmask |= 1 << i
            pmask = 0
            outside = False
            for p in inst.products:
                if p in sset.index:
                    pmask |= 1 << sset.index[p]
                else:
                    outside = True
            net = inst.net(self.keys)
            gain = 0
            support = 0  # gains that are not self-replication
            for k, d in net.items():
                if d > 0 and k in sset.index:
                    gain |= 1 << sset.index[k]
                    if not _is_replication(inst, self.keys, k):
                        support |= 1 << sset.index[k]
            self.rows.append((rmask, pmask, outside, gain, support))

    def closed(self, s: int) -> bool:
        return all(not ((r & ~s) == 0 and (out or p & ~s)) for r, p, out, _, _ in self.rows)

    def gains(self, s: int, interaction_only: bool) -> int:
        g = 0
        for r, _, _, gain, support in self.rows:
            if r & ~s == 0:
                g |= support if interaction_only else gain
        return g

    def level1(self, s: int) -> bool:
        return self.closed(s) and self.gains(s, True) & s == s

    def feeds(self, a: int, b: int) -> bool:
        u = a | b
        for r, _, _, gain, _ in self.rows:
            if r & ~u == 0 and r & a and gain & b:
                return True
        return False

    def names(self, s: int) -> tuple[str, ...]:
        return tuple(k for i, k in enumerate(self.keys) if s >> i & 1)


def organization_report(species, rules, probe_depth: int = DEFAULT_PROBE_DEPTH,
                        tolerance: float = DEFAULT_TOLERANCE) -> OrganizationReport:
    """Classify a species set (or a trace's final species) into organization levels.

    Level0: some species self-replicates.  Level1: the set is closed and every
    member is produced by an interaction other than its own replication.
    Level2-candidate: two disjoint Level1 subsets that each produce a member
    of the other.
    """
    rules = list(rules)
    if isinstance(species, Trace):
        species = final_species(species)
    sset = _as_set(species, tolerance)
    instances = reaction_instances(sset, rules, probe_depth)
    oracle = _SubsetOracle(sset, instances)
    full = (1 << len(sset)) - 1
    closed = oracle.closed(full)
    maintaining = oracle.gains(full, False) & full == full
    replicators = sorted({k for inst in instances for k in sset.keys if _is_replication(inst, sset.keys, k)})
    report = OrganizationReport(OrgLevel.NONE, closed, maintaining, replicators)
    if replicators:
        report.level = OrgLevel.LEVEL0
    if len(sset) and oracle.level1(full):
        report.level = OrgLevel.LEVEL1
        report.level1_sets.append(oracle.names(full))
    if 2 <= len(sset) <= MAX_LEVEL2_SPECIES:
        subsets = [s for s in range(1, full + 1) if oracle.level1(s)]
        for a, b in combinations(subsets, 2):
            if a & b == 0 and oracle.feeds(a, b) and oracle.feeds(b, a):
                report.level = OrgLevel.LEVEL2_CANDIDATE
                report.level2_pair = (oracle.names(a), oracle.names(b))
                break
    return report


def organization_level(species, rules, probe_depth: int = DEFAULT_PROBE_DEPTH,
                       tolerance: float = DEFAULT_TOLERANCE) -> OrgLevel:
    return organization_report(species, rules, probe_depth, tolerance).level


def final_species(trace: Trace) -> dict[str, Molecule]:
    if not trace.snapshots:
        return {}
    out = {}
    last = trace.snapshots[-1]
    for region in last.regions.values():
        for sid in region:
            if sid not in trace.species:
                raise CorruptTrace(f"species {sid} has no molecule record")
            out[sid] = parse_molecule(trace.species[sid])
    return out


def order_parameter(rules: Iterable[ReactionRule]) -> float | None:
    """Heating-rule count over cooling-rule count; inf with no cooling rules, None for 0/0."""
    kinds = Counter(r.kind for r in rules)
    heating, cooling = kinds["heating"], kinds["cooling"]
    if cooling == 0:
        return math.inf if heating else None
    return heating / cooling


# ---------------------------------------------------------------------------
# reaction networks


@dataclass
class ReactionNetwork:
    species: set[str] = field(default_factory=set)
    reactions: set[tuple[tuple[str, ...], tuple[str, ...]]] = field(default_factory=set)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {s: set() for s in self.species}
        for lhs, rhs in self.reactions:
            for a in lhs:
                adj[a].update(rhs)
        return adj

    def to_text(self, names: Mapping[str, str] | None = None) -> str:
        lines = [f"# species {len(self.species)}"]
        for s in sorted(self.species):
            lines.append(f"{s}" + (f"\t{names[s]}" if names and s in names else ""))
        lines.append(f"# reactions {len(self.reactions)}")
        for lhs, rhs in sorted(self.reactions):
            lines.append(f"{' + '.join(lhs) or '0'} -> {' + '.join(rhs) or '0'}")
        lines.append("# adjacency")
        for s, succ in sorted(self.adjacency().items()):
            lines.append(f"{s}: {' '.join(sorted(succ))}".rstrip())
        return "\n".join(lines) + "\n"


def extract_network(trace: Trace) -> ReactionNetwork:
    net = ReactionNetwork()
    for snap in trace.snapshots:
        for region in snap.regions.values():
            net.species.update(region)
    for rec in trace.event_records():
        try:
            for lhs, rhs in rec.get("reactions", ()):
                lhs_t, rhs_t = tuple(sorted(lhs)), tuple(sorted(rhs))
                net.species.update(lhs_t)
                net.species.update(rhs_t)
                net.reactions.add((lhs_t, rhs_t))
        except (TypeError, ValueError) as exc:
            raise CorruptTrace(f"bad reaction list in event at step {rec.get('step')}: {exc}") from exc
    return net
