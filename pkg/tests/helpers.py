"""Generators and brute-force oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np

from agc.membrane import MembraneNode, MembraneStructure
from agc.molecule import Molecule, canonical_species_id, quantize
from agc.multiset import Multiset
from agc.psystem import HERE, OUT, EvolutionRule, PSystem, inside
from agc.reaction import _binding, build_products, evaluate_guard


# ---------------------------------------------------------------------------
# membranes


def plane_trees(n: int):
    """All ordered rooted trees with n nodes, as nested tuples of children."""
    if n == 1:
        yield ()
        return
    # children forests of total size n-1
    yield from _forests(n - 1)


def _forests(n: int):
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for head in plane_trees(first):
            for rest in _forests(n - first):
                yield (head,) + rest


def label_tree(shape, labels) -> MembraneStructure:
    it = iter(labels)

    def build(children) -> MembraneNode:
        lab = next(it)
        return MembraneNode(lab, tuple(build(c) for c in children))

    return MembraneStructure(build(shape))


def ordered_text(node: MembraneNode) -> str:
    return f"[{node.label} " + "".join(ordered_text(c) + " " for c in node.children) + f"]{node.label}"


def sibling_orbit(node: MembraneNode) -> set[str]:
    """Every ordered rendering reachable by permuting siblings at any depth."""
    child_orbits = [sorted(sibling_orbit(c)) for c in node.children]
    out = set()
    for order in itertools.permutations(range(len(child_orbits))):
        for pick in itertools.product(*(child_orbits[k] for k in order)):
            out.add(f"[{node.label} " + "".join(p + " " for p in pick) + f"]{node.label}")
    return out


def random_structure(rng: np.random.Generator, n: int) -> MembraneStructure:
    parents = [None] + [int(rng.integers(k)) for k in range(1, n)]
    labels = [int(x) + 1 for x in rng.permutation(n)]

    def build(k) -> MembraneNode:
        return MembraneNode(labels[k], tuple(build(c) for c in range(n) if parents[c] == k))

    return MembraneStructure(build(0))


# ---------------------------------------------------------------------------
# molecules


def random_molecule(rng: np.random.Generator, n: int, labels=("A", "B", "C"), weights=(0.5, 0.8, 1.0),
                    connected: bool = True, extra: int | None = None) -> Molecule:
    atoms = tuple(str(rng.choice(labels)) for _ in range(n))
    bonds: dict[tuple[int, int], float] = {}
    if connected:
        for k in range(1, n):
            bonds[(int(rng.integers(k)), k)] = float(rng.choice(weights))
    extra = int(rng.integers(0, n + 1)) if extra is None else extra
    for _ in range(extra if n > 1 else 0):
        i, j = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        bonds.setdefault((i, j), float(rng.choice(weights)))
    return Molecule(atoms, tuple((i, j, w) for (i, j), w in sorted(bonds.items())))


def permute(m: Molecule, perm) -> Molecule:
    """Relabel atom k as perm[k]."""
    atoms = [None] * len(m.atoms)
    for k, p in enumerate(perm):
        atoms[p] = m.atoms[k]
    return Molecule(tuple(atoms), tuple((perm[i], perm[j], w) for i, j, w in m.bonds))


def brute_isomorphic(a: Molecule, b: Molecule, tol: float = 1e-9) -> bool:
    if sorted(a.atoms) != sorted(b.atoms) or len(a.bonds) != len(b.bonds):
        return False
    target = {(min(i, j), max(i, j)): quantize(w, tol) for i, j, w in b.bonds}
    for perm in itertools.permutations(range(len(a.atoms))):
        if any(a.atoms[k] != b.atoms[perm[k]] for k in range(len(perm))):
            continue
        if all(target.get((min(perm[i], perm[j]), max(perm[i], perm[j]))) == quantize(w, tol) for i, j, w in a.bonds):
            return True
    return False


def atom_multiset(mols) -> Counter:
    c: Counter = Counter()
    for m in mols:
        c.update(m.atoms)
    return c


def is_connected(m: Molecule) -> bool:
    n = len(m.atoms)
    adj = {k: set() for k in range(n)}
    for i, j, _ in m.bonds:
        adj[i].add(j)
        adj[j].add(i)
    seen, stack = {0}, [0]
    while stack:
        for v in adj[stack.pop()] - seen:
            seen.add(v)
            stack.append(v)
    return len(seen) == n


# ---------------------------------------------------------------------------
# classic systems


def brute_maximal(lhs: list[Multiset], enabled: list[bool], contents: Multiset) -> set[tuple[int, ...]]:
    """All maximal application vectors for one region."""
    R = len(lhs)
    bounds = []
    for r in range(R):
        if not enabled[r]:
            bounds.append(0)
        else:
            bounds.append(min(contents[s] // q for s, q in lhs[r].items()))
    out = set()
    for vec in itertools.product(*(range(b + 1) for b in bounds)):
        used = Counter()
        for r, n in enumerate(vec):
            for s, q in lhs[r].items():
                used[s] += q * n
        if any(used[s] > contents[s] for s in used):
            continue
        residual = {s: contents[s] - used[s] for s in contents}
        if any(enabled[r] and all(residual.get(s, 0) >= q for s, q in lhs[r].items()) for r in range(R)):
            continue
        out.add(vec)
    return out


def random_psystem(rng: np.random.Generator, alphabet=("a", "b", "c")) -> PSystem:
    """Small random system: up to 3 regions, 3 rules and 6 objects per region."""
    ms = random_structure(rng, int(rng.integers(1, 4)))
    labels = ms.labels
    contents = {}
    for lab in labels:
        k = int(rng.integers(0, 7))
        contents[lab] = Multiset(str(rng.choice(alphabet)) for _ in range(k))
    rules: dict[int, list[EvolutionRule]] = {}
    for _ in range(int(rng.integers(1, 4))):
        region = int(rng.choice(labels))
        lhs = Multiset(str(rng.choice(alphabet)) for _ in range(int(rng.integers(1, 3))))
        rhs = []
        for _ in range(int(rng.integers(0, 3))):
            sym = str(rng.choice(alphabet))
            roll = rng.random()
            if roll < 0.5:
                tgt = HERE
            elif roll < 0.75:
                tgt = OUT
            else:
                tgt = inside(int(rng.choice(labels)))
            rhs.append((sym, tgt))
        dissolves = region != ms.skin and rng.random() < 0.25
        rules.setdefault(region, []).append(EvolutionRule(region, lhs, tuple(rhs), dissolves))
    return PSystem(frozenset(alphabet), ms, contents, {k: tuple(v) for k, v in rules.items()}, ms.skin)


def total_objects(config) -> int:
    return sum(m.cardinality for m in config.contents.values()) + config.expelled.cardinality


def binomial_sigma(n: int, p: float) -> float:
    return math.sqrt(p * (1 - p) / n)


# ---------------------------------------------------------------------------
# organizations: brute-force embeddings by permutation


def species_key(m: Molecule) -> str:
    return canonical_species_id(m).short


def brute_embeddings(pattern, m):
    n = len(m.atoms)
    if pattern.exact and (n != len(pattern.atoms) or len(m.bonds) != len(pattern.bonds)):
        return []
    weights = {}
    for i, j, w in m.bonds:
        weights[(i, j)] = weights[(j, i)] = w
    out = []
    for image in itertools.permutations(range(n), len(pattern.atoms)):
        emb = {a.name: image[k] for k, a in enumerate(pattern.atoms)}
        if any(a.label is not None and m.atoms[emb[a.name]] != a.label for a in pattern.atoms):
            continue
        ok = True
        for b in pattern.bonds:
            w = weights.get((emb[b.a], emb[b.b]))
            if w is None or not b.lo <= w <= b.hi:
                ok = False
                break
        if ok:
            out.append(emb)
    return out


def brute_reactions(species, rules):
    for rule in rules:
        for combo in itertools.product(species, repeat=rule.arity):
            per = [brute_embeddings(p, m) for p, m in zip(rule.reactant_patterns, combo)]
            for embs in itertools.product(*per):
                binding = _binding(rule, list(combo), embs)
                if not evaluate_guard(rule.guard, binding):
                    continue
                out = build_products(rule, list(combo), binding)
                if out.ok:
                    yield [species_key(m) for m in combo], [species_key(m) for m in out.products]


def brute_closed(species, rules):
    keys = {species_key(m) for m in species}
    return all(set(prods) <= keys for _, prods in brute_reactions(species, rules))


def brute_maintaining(species, rules):
    produced = set()
    for reacts, prods in brute_reactions(species, rules):
        net = Counter(prods)
        net.subtract(reacts)
        produced |= {k for k, d in net.items() if d > 0}
    return {species_key(m) for m in species} <= produced


# ---------------------------------------------------------------------------
# acceptance summary lines, printed by conftest at the end of a run

ACCEPTANCE: dict[int, str] = {}


def report(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok
