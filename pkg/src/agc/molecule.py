"""Molecules as undirected atom-labelled graphs with real bond weights.

Text form::

    atoms: A,B,C ; bonds: 0-1:0.2, 1-2:0.9
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import IndexOutOfRange, MoleculeTooLarge, NonFiniteWeight, ParseError

DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ATOMS = 64


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[str, ...]
    bonds: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        norm = []
        for i, j, w in self.bonds:
            i, j = int(i), int(j)
            norm.append((i, j, float(w)) if i <= j else (j, i, float(w)))
        norm.sort(key=lambda b: (b[0], b[1]))
        object.__setattr__(self, "bonds", tuple(norm))

    @classmethod
    def parse(cls, text: str) -> "Molecule":
        return parse_molecule(text)

    def __len__(self) -> int:
        return len(self.atoms)

    def __str__(self) -> str:
        return format_molecule(self)

    def atom_counts(self) -> Counter:
        return Counter(self.atoms)

    def neighbours(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in self.atoms]
        for i, j, w in self.bonds:
            adj[i].append((j, w))
            adj[j].append((i, w))
        return adj

    def bond_weight(self, i: int, j: int) -> float | None:
        if i > j:
            i, j = j, i
        for a, b, w in self.bonds:
            if a == i and b == j:
                return w
        return None

    def is_connected(self) -> bool:
        return len(set(component_labels(self).tolist())) <= 1


def format_molecule(m: Molecule) -> str:
    bonds = ", ".join(f"{i}-{j}:{w!r}" for i, j, w in m.bonds)
    return f"atoms: {','.join(m.atoms)} ; bonds: {bonds}".rstrip()


_BOND = re.compile(r"\s*(\d+)\s*-\s*(\d+)\s*:\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf|nan)\s*$")


def parse_molecule(text: str) -> Molecule:
    head, sep, tail = text.partition(";")
    key, colon, atom_text = head.partition(":")
    if key.strip() != "atoms" or not colon:
        raise ParseError("molecule must start with 'atoms:'", 1, 1, code="molecule-syntax")
    atoms = [a.strip() for a in atom_text.split(",") if a.strip()]
    if not atoms:
        raise ParseError("molecule needs at least one atom", 1, len(key) + 2, code="molecule-syntax")
    for a in atoms:
        if not re.fullmatch(r"[A-Z][A-Za-z0-9_]*", a):
            raise ParseError(f"bad atom label {a!r}", 1, text.find(a) + 1, code="molecule-syntax")
    bonds = []
    if sep:
        bkey, bcolon, bond_text = tail.partition(":")
        if bkey.strip() != "bonds" or not bcolon:
            raise ParseError("expected 'bonds:' after ';'", 1, len(head) + 2, code="molecule-syntax")
        offset = len(head) + 1 + len(bkey) + 1
        for part in bond_text.split(","):
            if part.strip():
                m = _BOND.match(part)
                if not m:
                    raise ParseError(f"bad bond {part.strip()!r}", 1, offset + 1, code="molecule-syntax")
                bonds.append((int(m.group(1)), int(m.group(2)), float(m.group(3))))
            offset += len(part) + 1
    return Molecule(tuple(atoms), tuple(bonds))


def validate_molecule(m: Molecule) -> list[str]:
    out = []
    n = len(m.atoms)
    if n == 0:
        out.append("molecule has no atoms")
    for a in m.atoms:
        if not isinstance(a, str) or not a:
            out.append(f"bad atom label {a!r}")
    seen = set()
    for i, j, w in m.bonds:
        if not (0 <= i < n and 0 <= j < n):
            out.append(f"bond {i}-{j} index out of range")
        if i == j:
            out.append(f"self-loop on atom {i}")
        if (i, j) in seen:
            out.append(f"parallel bond {i}-{j}")
        seen.add((i, j))
        if not math.isfinite(w):
            out.append(f"non-finite weight on bond {i}-{j}")
    return out


def component_labels(m: Molecule, threshold: float | None = None) -> np.ndarray:
    """Component id per atom, numbered by smallest member; bonds below *threshold* are ignored."""
    kept = [(i, j) for i, j, w in m.bonds if threshold is None or w >= threshold]
    src = np.array([b[0] for b in kept], dtype=np.int64)
    dst = np.array([b[1] for b in kept], dtype=np.int64)
    return kernels.component_labels(len(m.atoms), src, dst)


def split_components(m: Molecule, labels: np.ndarray, bonds=None) -> list[Molecule]:
    bonds = m.bonds if bonds is None else bonds
    k = int(labels.max()) + 1 if len(labels) else 0
    members: list[list[int]] = [[] for _ in range(k)]
    for v, c in enumerate(labels.tolist()):
        members[c].append(v)
    local = {}
    for group in members:
        for pos, v in enumerate(group):
            local[v] = pos
    parts: list[list] = [[] for _ in range(k)]
    for i, j, w in bonds:
        c = labels[i]
        if c == labels[j]:
            parts[c].append((local[i], local[j], w))
    return [Molecule(tuple(m.atoms[v] for v in group), tuple(parts[c])) for c, group in enumerate(members)]


def heat(m: Molecule, threshold: float) -> list[Molecule]:
    """Break every bond weaker than *threshold*; return the connected pieces."""
    kept = tuple(b for b in m.bonds if b[2] >= threshold)
    return split_components(m, component_labels(m, threshold), kept)


def cool(a: Molecule, b: Molecule, attach_a: int, attach_b: int, weight: float) -> Molecule:
    """Join *a* and *b* with one new bond; b's atoms follow a's."""
    if not 0 <= attach_a < len(a.atoms):
        raise IndexOutOfRange(f"atom {attach_a} not in first molecule")
    if not 0 <= attach_b < len(b.atoms):
        raise IndexOutOfRange(f"atom {attach_b} not in second molecule")
    if not math.isfinite(weight):
        raise NonFiniteWeight(f"bond weight {weight} is not finite")
    off = len(a.atoms)
    bonds = a.bonds + tuple((i + off, j + off, w) for i, j, w in b.bonds) + ((attach_a, attach_b + off, weight),)
    return Molecule(a.atoms + b.atoms, bonds)


def disjoint_union(parts: list[Molecule]) -> tuple[Molecule, list[int]]:
    atoms: list[str] = []
    bonds = []
    offsets = []
    for p in parts:
        off = len(atoms)
        offsets.append(off)
        atoms.extend(p.atoms)
        bonds.extend((i + off, j + off, w) for i, j, w in p.bonds)
    return Molecule(tuple(atoms), tuple(bonds)), offsets


# ---------------------------------------------------------------------------
# species identity


def quantize(w: float, tol: float) -> int:
    return int(round(w / tol))


@dataclass(frozen=True, order=True)
class SpeciesId:
    canonical_key: bytes

    @property
    def short(self) -> str:
        return hashlib.sha256(self.canonical_key).hexdigest()[:16]

    def __str__(self) -> str:
        return self.short

    def molecule(self) -> Molecule:
        """The canonically ordered molecule; weights are grid multiples of the tolerance."""
        text = self.canonical_key.decode()
        head, _, rest = text.partition("|")
        tol_text, _, body = rest.partition("|")
        tol = float(tol_text)
        atoms = tuple(head.split(","))
        bonds = []
        for part in body.split(",") if body else ():
            ij, q = part.split(":")
            i, j = ij.split("-")
            bonds.append((int(i), int(j), int(q) * tol))
        return Molecule(atoms, tuple(bonds))


class _Search:
    """Individualization-refinement search for the minimum leaf certificate.

    Branches are pruned by orbits of the automorphisms found so far that fix
    the current individualization prefix pointwise.
    """

    def __init__(self, atoms, qbonds):
        self.n = n = len(atoms)
        self.atoms = atoms
        self.qbonds = qbonds
        weights = sorted({q for _, _, q in qbonds})
        wrank = {q: r for r, q in enumerate(weights)}
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for i, j, q in qbonds:
            adj[i].append((j, wrank[q]))
            adj[j].append((i, wrank[q]))
        indptr = np.zeros(n + 1, dtype=np.int64)
        nbr, wcls = [], []
        for v in range(n):
            adj[v].sort()
            nbr.extend(u for u, _ in adj[v])
            wcls.extend(c for _, c in adj[v])
            indptr[v + 1] = len(nbr)
        self.indptr = indptr
        self.nbr = np.array(nbr, dtype=np.int64)
        self.wcls = np.array(wcls, dtype=np.int64)
        labels = sorted(set(atoms))
        self.initial = np.array([labels.index(a) for a in atoms], dtype=np.int64)
        self.best = None
        self.best_perm = None
        self.automorphisms: list[tuple[int, ...]] = []

    def refine(self, colors):
        return kernels.refine_partition(colors, self.indptr, self.nbr, self.wcls)

    def certificate(self, colors):
        pos = colors.tolist()
        return (
            tuple(a for _, a in sorted(zip(pos, self.atoms))),
            tuple(sorted((min(pos[i], pos[j]), max(pos[i], pos[j]), q) for i, j, q in self.qbonds)),
        ), pos

    def run(self):
        self._visit(self.refine(self.initial), ())
        return self.best, self.best_perm

    def _visit(self, colors, prefix):
        n = self.n
        counts = np.bincount(colors, minlength=n)
        if counts.max() == 1:
            cert, pos = self.certificate(colors)
            if self.best is None or cert < self.best:
                self.best, self.best_perm = cert, pos
            elif cert == self.best:
                # pos maps vertex -> position; best_perm likewise
                inv = [0] * n
                for v, p in enumerate(self.best_perm):
                    inv[p] = v
                self.automorphisms.append(tuple(inv[pos[v]] for v in range(n)))
            return
        target = int(np.flatnonzero(counts > 1)[0])
        cell = [v for v in range(n) if colors[v] == target]
        explored: list[int] = []
        for v in cell:
            if explored and self._same_orbit(v, explored, prefix):
                continue
            explored.append(v)
            indiv = colors * 2 + 1
            indiv[v] -= 1
            _, dense = np.unique(indiv, return_inverse=True)
            self._visit(self.refine(dense.astype(np.int64)), prefix + (v,))

    def _same_orbit(self, v, explored, prefix) -> bool:
        gens = [g for g in self.automorphisms if all(g[p] == p for p in prefix)]
        if not gens:
            return False
        orbit = {v}
        frontier = [v]
        while frontier:
            x = frontier.pop()
            for g in gens:
                y = g[x]
                if y not in orbit:
                    orbit.add(y)
                    frontier.append(y)
        return any(e in orbit for e in explored)


def _component_certificate(atoms, qbonds):
    return _Search(atoms, qbonds).run()


def canonical_form(m: Molecule, weight_tolerance: float = DEFAULT_TOLERANCE,
                   max_atoms: int = DEFAULT_MAX_ATOMS) -> tuple[tuple[str, ...], tuple[tuple[int, int, int], ...], list[int]]:
    """Return (atoms, quantized bonds, order) of the canonical relabelling.

    ``order[k]`` is the original index of the atom placed at position k.
    Components are canonized separately and concatenated in sorted order.
    """
    if len(m.atoms) > max_atoms:
        raise MoleculeTooLarge(f"{len(m.atoms)} atoms exceeds the cap of {max_atoms}")
    labels = component_labels(m).tolist()
    groups: dict[int, list[int]] = {}
    for v, c in enumerate(labels):
        groups.setdefault(c, []).append(v)
    pieces = []
    for members in groups.values():
        local = {v: k for k, v in enumerate(members)}
        atoms = tuple(m.atoms[v] for v in members)
        qbonds = [(local[i], local[j], quantize(w, weight_tolerance))
                  for i, j, w in m.bonds if i in local]
        cert, pos = _component_certificate(atoms, qbonds)
        order = [0] * len(members)
        for k, p in enumerate(pos):
            order[p] = members[k]
        pieces.append((cert, order))
    pieces.sort(key=lambda p: p[0])
    atoms_out: list[str] = []
    bonds_out: list[tuple[int, int, int]] = []
    order_out: list[int] = []
    for (catoms, cbonds), order in pieces:
        off = len(atoms_out)
        atoms_out.extend(catoms)
        bonds_out.extend((i + off, j + off, q) for i, j, q in cbonds)
        order_out.extend(order)
    return tuple(atoms_out), tuple(bonds_out), order_out


@lru_cache(maxsize=65536)
def canonical_species_id(m: Molecule, weight_tolerance: float = DEFAULT_TOLERANCE,
                         max_atoms: int = DEFAULT_MAX_ATOMS) -> SpeciesId:
    atoms, bonds, _ = canonical_form(m, weight_tolerance, max_atoms)
    body = ",".join(f"{i}-{j}:{q}" for i, j, q in bonds)
    return SpeciesId(f"{','.join(atoms)}|{weight_tolerance!r}|{body}".encode())


def isomorphic(a: Molecule, b: Molecule, weight_tolerance: float = DEFAULT_TOLERANCE,
               max_atoms: int = DEFAULT_MAX_ATOMS) -> bool:
    """Direct backtracking search for a label- and weight-preserving bijection."""
    for m in (a, b):
        if len(m.atoms) > max_atoms:
            raise MoleculeTooLarge(f"{len(m.atoms)} atoms exceeds the cap of {max_atoms}")
    n = len(a.atoms)
    if n != len(b.atoms) or len(a.bonds) != len(b.bonds):
        return False
    if Counter(a.atoms) != Counter(b.atoms):
        return False
    qa = {(i, j): quantize(w, weight_tolerance) for i, j, w in a.bonds}
    qb = {(i, j): quantize(w, weight_tolerance) for i, j, w in b.bonds}
    if sorted(qa.values()) != sorted(qb.values()):
        return False

    def local_inv(m, q):
        inv = [[] for _ in m.atoms]
        for (i, j), w in q.items():
            inv[i].append(w)
            inv[j].append(w)
        return [(m.atoms[v], tuple(sorted(inv[v]))) for v in range(len(m.atoms))]

    ia, ib = local_inv(a, qa), local_inv(b, qb)
    adj_a = [dict() for _ in range(n)]
    adj_b = [dict() for _ in range(n)]
    for (i, j), w in qa.items():
        adj_a[i][j] = w
        adj_a[j][i] = w
    for (i, j), w in qb.items():
        adj_b[i][j] = w
        adj_b[j][i] = w
    # most-constrained-first ordering of a's atoms
    order = sorted(range(n), key=lambda v: -len(adj_a[v]))
    mapping: dict[int, int] = {}
    used = [False] * n

    def extend(k: int) -> bool:
        if k == n:
            return True
        v = order[k]
        for u in range(n):
            if used[u] or ib[u] != ia[v]:
                continue
            ok = True
            for x, w in adj_a[v].items():
                if x in mapping and adj_b[u].get(mapping[x]) != w:
                    ok = False
                    break
            if ok:
                mapped_nbrs = sum(1 for x in adj_a[v] if x in mapping)
                if sum(1 for y in adj_b[u] if used[y]) != mapped_nbrs:
                    ok = False
            if ok:
                mapping[v] = u
                used[u] = True
                if extend(k + 1):
                    return True
                del mapping[v]
                used[u] = False
        return False

    return extend(0)
