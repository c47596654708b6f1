"""Guarded n-ary graph-transformation reaction rules.

Rule text form (full grammar in ``docs/grammar.md``)::

    rule swap: (m1: A-B w1) + (m2: C)! | 0.8 > w1
        => break m1.A-m1.B ; bond m1.B-m2.C 0.8 ; p=0.3 ; conserve

Products are built by taking the disjoint union of the reactants (in
reactant order), applying the actions, and splitting the result into
connected components.  Unmatched atoms therefore travel with whatever
matched atom they remain bonded to.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from itertools import product as cartesian
from typing import Iterator, Union

import numpy as np

from .errors import ArityMismatch, Diagnostic, InvalidProduct, ParseError, ProbeBudgetExceeded, UnboundVariable
from .molecule import Molecule, component_labels, disjoint_union, split_components, validate_molecule

DEFAULT_MAX_PRODUCTS = 16
KINDS = ("general", "heating", "cooling")

# ---------------------------------------------------------------------------
# patterns


@dataclass(frozen=True)
class PatternAtom:
    name: str
    label: str | None  # None matches any label


@dataclass(frozen=True)
class PatternBond:
    a: str
    b: str
    var: str | None = None
    lo: float = -math.inf
    hi: float = math.inf


@dataclass(frozen=True)
class GraphPattern:
    var: str
    atoms: tuple[PatternAtom, ...]
    bonds: tuple[PatternBond, ...] = ()
    exact: bool = False

    def __str__(self) -> str:
        parts = []
        for a in self.atoms:
            if a.label is None:
                parts.append(f"{a.name}=*")
            elif a.name == a.label:
                parts.append(a.label)
            else:
                parts.append(f"{a.name}={a.label}")
        for b in self.bonds:
            s = f"{b.a}-{b.b}"
            if b.var:
                s += f" {b.var}"
            if b.lo != -math.inf or b.hi != math.inf:
                s += f" in [{_num(b.lo)}, {_num(b.hi)}]"
            parts.append(s)
        return f"({self.var}: {', '.join(parts)})" + ("!" if self.exact else "")


def _num(x: float) -> str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return repr(float(x))


def enumerate_embeddings(pattern: GraphPattern, m: Molecule) -> list[dict[str, int]]:
    """All injective label/bond/weight-consistent maps pattern atom -> atom index."""
    n = len(m.atoms)
    if pattern.exact and (n != len(pattern.atoms) or len(m.bonds) != len(pattern.bonds)):
        return []
    if len(pattern.atoms) > n:
        return []
    weights = {(i, j): w for i, j, w in m.bonds}
    names = [a.name for a in pattern.atoms]
    position = {nm: k for k, nm in enumerate(names)}
    # bonds checkable once both ends are assigned, keyed by the later end
    checks: list[list[PatternBond]] = [[] for _ in names]
    for b in pattern.bonds:
        checks[max(position[b.a], position[b.b])].append(b)
    out: list[dict[str, int]] = []
    assign: list[int] = []
    used = [False] * n

    def bond_ok(b: PatternBond) -> bool:
        i, j = assign[position[b.a]], assign[position[b.b]]
        w = weights.get((i, j) if i < j else (j, i))
        return w is not None and b.lo <= w <= b.hi

    def extend(k: int) -> None:
        if k == len(names):
            out.append(dict(zip(names, assign)))
            return
        label = pattern.atoms[k].label
        for v in range(n):
            if used[v] or (label is not None and m.atoms[v] != label):
                continue
            assign.append(v)
            used[v] = True
            if all(bond_ok(b) for b in checks[k]):
                extend(k + 1)
            assign.pop()
            used[v] = False

    extend(0)
    return out


# ---------------------------------------------------------------------------
# guard / weight expressions


@dataclass(frozen=True)
class Const:
    value: float

    def evaluate(self, env: "Binding") -> float:
        return self.value

    def variables(self) -> set[str]:
        return set()

    def __str__(self) -> str:
        return _num(self.value)


@dataclass(frozen=True)
class WeightVar:
    name: str

    def evaluate(self, env: "Binding") -> float:
        try:
            return env.weights[self.name]
        except KeyError:
            raise UnboundVariable(f"weight variable {self.name!r} is not bound") from None

    def variables(self) -> set[str]:
        return {self.name}

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class AtomCount:
    mol: str

    def evaluate(self, env: "Binding") -> float:
        try:
            return float(env.atom_counts[self.mol])
        except KeyError:
            raise UnboundVariable(f"molecule variable {self.mol!r} is not bound") from None

    def variables(self) -> set[str]:
        return {"@" + self.mol}

    def __str__(self) -> str:
        return f"atoms({self.mol})"


@dataclass(frozen=True)
class Sum:
    terms: tuple[tuple[int, "NumExpr"], ...]  # (sign, term)

    def evaluate(self, env: "Binding") -> float:
        return sum(sign * t.evaluate(env) for sign, t in self.terms)

    def variables(self) -> set[str]:
        return set().union(*(t.variables() for _, t in self.terms))

    def __str__(self) -> str:
        out = []
        for k, (sign, t) in enumerate(self.terms):
            if k == 0:
                out.append(("-" if sign < 0 else "") + str(t))
            else:
                out.append(("- " if sign < 0 else "+ ") + str(t))
        return " ".join(out)


NumExpr = Union[Const, WeightVar, AtomCount, Sum]

_COMPARE = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


@dataclass(frozen=True)
class Compare:
    op: str
    left: NumExpr
    right: NumExpr

    def evaluate(self, env: "Binding") -> bool:
        return _COMPARE[self.op](self.left.evaluate(env), self.right.evaluate(env))

    def variables(self) -> set[str]:
        return self.left.variables() | self.right.variables()

    def __str__(self) -> str:
        op = "==" if self.op == "=" else self.op
        return f"{self.left} {op} {self.right}"


@dataclass(frozen=True)
class Truth:
    value: bool

    def evaluate(self, env: "Binding") -> bool:
        return self.value

    def variables(self) -> set[str]:
        return set()

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Not:
    item: "GuardExpr"

    def evaluate(self, env: "Binding") -> bool:
        return not self.item.evaluate(env)

    def variables(self) -> set[str]:
        return self.item.variables()

    def __str__(self) -> str:
        inner = str(self.item)
        return f"not ({inner})" if isinstance(self.item, (And, Or, Compare)) else f"not {inner}"


@dataclass(frozen=True)
class And:
    items: tuple["GuardExpr", ...]

    def evaluate(self, env: "Binding") -> bool:
        # every operand is evaluated so unbound variables always surface
        values = [it.evaluate(env) for it in self.items]
        return all(values)

    def variables(self) -> set[str]:
        return set().union(*(it.variables() for it in self.items))

    def __str__(self) -> str:
        return " and ".join(f"({it})" if isinstance(it, Or) else str(it) for it in self.items)


@dataclass(frozen=True)
class Or:
    items: tuple["GuardExpr", ...]

    def evaluate(self, env: "Binding") -> bool:
        values = [it.evaluate(env) for it in self.items]
        return any(values)

    def variables(self) -> set[str]:
        return set().union(*(it.variables() for it in self.items))

    def __str__(self) -> str:
        return " or ".join(str(it) for it in self.items)


GuardExpr = Union[Truth, Compare, Not, And, Or]
TRUE = Truth(True)

# ---------------------------------------------------------------------------
# product templates


@dataclass(frozen=True)
class AtomRef:
    mol: str
    atom: str

    def __str__(self) -> str:
        return f"{self.mol}.{self.atom}"


@dataclass(frozen=True)
class BreakBond:
    a: AtomRef
    b: AtomRef

    def __str__(self) -> str:
        return f"break {self.a}-{self.b}"


@dataclass(frozen=True)
class MakeBond:
    a: AtomRef
    b: AtomRef
    weight: NumExpr

    def __str__(self) -> str:
        return f"bond {self.a}-{self.b} {self.weight}"


@dataclass(frozen=True)
class SetWeight:
    a: AtomRef
    b: AtomRef
    weight: NumExpr

    def __str__(self) -> str:
        return f"set {self.a}-{self.b} {self.weight}"


@dataclass(frozen=True)
class HeatAll:
    threshold: float

    def __str__(self) -> str:
        return f"heat {_num(self.threshold)}"


@dataclass(frozen=True)
class CopyMolecule:
    mol: str

    def __str__(self) -> str:
        return f"copy {self.mol}"


@dataclass(frozen=True)
class AddAtom:
    label: str

    def __str__(self) -> str:
        return f"add {self.label}"


@dataclass(frozen=True)
class DeleteMolecule:
    mol: str

    def __str__(self) -> str:
        return f"delete {self.mol}"


Action = Union[BreakBond, MakeBond, SetWeight, HeatAll, CopyMolecule, AddAtom, DeleteMolecule]
_CREATES_OR_DESTROYS = (CopyMolecule, AddAtom, DeleteMolecule)


@dataclass(frozen=True)
class ReactionRule:
    name: str
    reactant_patterns: tuple[GraphPattern, ...]
    guard: GuardExpr = TRUE
    actions: tuple[Action, ...] = ()
    probability_weight: float = 1.0
    kind: str = "general"
    conserves_atoms: bool = False
    region: int | None = None
    routing: tuple = ()          # Targets from agc.psystem, per product; last one repeats
    dissolves: bool = False

    @property
    def arity(self) -> int:
        return len(self.reactant_patterns)

    def __str__(self) -> str:
        head = f"rule {self.name}" + (f" @ {self.region}" if self.region is not None else "")
        body = " + ".join(str(p) for p in self.reactant_patterns)
        if self.guard != TRUE:
            body += f" | {self.guard}"
        tail = [str(a) for a in self.actions]
        if self.routing:
            tail.append("route " + ", ".join(str(t) for t in self.routing))
        if self.dissolves:
            tail.append("delta")
        tail.append(f"p={self.probability_weight!r}")
        if self.kind != "general":
            tail.append(f"kind={self.kind}")
        if self.conserves_atoms:
            tail.append("conserve")
        return f"{head}: {body} => {' ; '.join(tail)}"

    def target_for(self, k: int):
        from .psystem import HERE

        if not self.routing:
            return HERE
        return self.routing[min(k, len(self.routing) - 1)]


# ---------------------------------------------------------------------------
# matching and application


@dataclass
class Binding:
    embeddings: tuple[dict[str, int], ...]
    molecules: dict[str, int] = field(default_factory=dict)   # molecule var -> reactant index
    weights: dict[str, float] = field(default_factory=dict)
    atom_counts: dict[str, int] = field(default_factory=dict)

    def atom(self, ref: AtomRef) -> tuple[int, int]:
        k = self.molecules[ref.mol]
        return k, self.embeddings[k][ref.atom]


def _binding(rule: ReactionRule, reactants, embeddings) -> Binding:
    b = Binding(tuple(embeddings))
    for k, (pat, mol, emb) in enumerate(zip(rule.reactant_patterns, reactants, embeddings)):
        b.molecules[pat.var] = k
        b.atom_counts[pat.var] = len(mol.atoms)
        for pb in pat.bonds:
            if pb.var is not None:
                i, j = emb[pb.a], emb[pb.b]
                b.weights[pb.var] = mol.bond_weight(i, j)
    return b


def match_reactants(rule: ReactionRule, reactants: list[Molecule], rng: np.random.Generator) -> Binding | None:
    """Pick one embedding per reactant uniformly at random; None when any reactant fails."""
    if len(reactants) != rule.arity:
        raise ArityMismatch(f"rule {rule.name!r} takes {rule.arity} reactants, got {len(reactants)}")
    chosen = []
    for pat, mol in zip(rule.reactant_patterns, reactants):
        embs = enumerate_embeddings(pat, mol)
        if not embs:
            return None
        chosen.append(embs[int(rng.integers(len(embs)))] if len(embs) > 1 else embs[0])
    return _binding(rule, reactants, chosen)


def enumerate_bindings(rule: ReactionRule, reactants: list[Molecule], limit: int | None = None) -> Iterator[Binding]:
    """Every embedding combination, in a fixed order.

    Raises ProbeBudgetExceeded up front when there are more than *limit*.
    """
    if len(reactants) != rule.arity:
        raise ArityMismatch(f"rule {rule.name!r} takes {rule.arity} reactants, got {len(reactants)}")
    per = [enumerate_embeddings(p, m) for p, m in zip(rule.reactant_patterns, reactants)]
    total = math.prod(len(e) for e in per)
    if limit is not None and total > limit:
        raise ProbeBudgetExceeded(f"rule {rule.name!r}: {total} embeddings exceed the probe budget {limit}")
    for combo in cartesian(*per):
        yield _binding(rule, reactants, combo)


def evaluate_guard(guard: GuardExpr, binding: Binding) -> bool:
    return bool(guard.evaluate(binding))


@dataclass
class Outcome:
    products: list[Molecule] | None
    reason: str = "ok"   # ok | no-match | guard | no-change | product-limit

    @property
    def ok(self) -> bool:
        return self.products is not None


def build_products(rule: ReactionRule, reactants: list[Molecule], binding: Binding,
                   max_products: int = DEFAULT_MAX_PRODUCTS) -> Outcome:
    """Deterministically apply the rule's actions under *binding*."""
    union, offsets = disjoint_union(list(reactants))
    atoms = list(union.atoms)
    bonds = {(i, j): w for i, j, w in union.bonds}
    dead: set[int] = set()

    def idx(ref: AtomRef) -> int:
        k, a = binding.atom(ref)
        return offsets[k] + a

    def key(ref_a: AtomRef, ref_b: AtomRef) -> tuple[int, int]:
        i, j = idx(ref_a), idx(ref_b)
        return (i, j) if i < j else (j, i)

    for act in rule.actions:
        if isinstance(act, BreakBond):
            if bonds.pop(key(act.a, act.b), None) is None:
                raise InvalidProduct(rule.name, [f"{act}: no such bond"])
        elif isinstance(act, MakeBond):
            k = key(act.a, act.b)
            if k[0] == k[1]:
                raise InvalidProduct(rule.name, [f"{act}: self-loop"])
            if k in bonds:
                raise InvalidProduct(rule.name, [f"{act}: parallel bond"])
            bonds[k] = float(act.weight.evaluate(binding))
        elif isinstance(act, SetWeight):
            k = key(act.a, act.b)
            if k not in bonds:
                raise InvalidProduct(rule.name, [f"{act}: no such bond"])
            bonds[k] = float(act.weight.evaluate(binding))
        elif isinstance(act, HeatAll):
            weak = [k for k, w in bonds.items() if w < act.threshold]
            if not weak:
                return Outcome(None, "no-change")
            for k in weak:
                del bonds[k]
        elif isinstance(act, CopyMolecule):
            src = reactants[binding.molecules[act.mol]]
            off = len(atoms)
            atoms.extend(src.atoms)
            for i, j, w in src.bonds:
                bonds[(i + off, j + off)] = w
        elif isinstance(act, AddAtom):
            atoms.append(act.label)
        elif isinstance(act, DeleteMolecule):
            k = binding.molecules[act.mol]
            dead.update(range(offsets[k], offsets[k] + len(reactants[k].atoms)))
    if dead:
        keep = [v for v in range(len(atoms)) if v not in dead]
        remap = {v: k for k, v in enumerate(keep)}
        atoms = [atoms[v] for v in keep]
        bonds = {(remap[i], remap[j]): w for (i, j), w in bonds.items() if i in remap and j in remap}
    if not atoms:
        return Outcome([], "ok")
    whole = Molecule(tuple(atoms), tuple((i, j, w) for (i, j), w in bonds.items()))
    problems = validate_molecule(whole)
    if problems:
        raise InvalidProduct(rule.name, problems)
    products = split_components(whole, component_labels(whole))
    if len(products) > max_products:
        return Outcome(None, "product-limit")
    if rule.conserves_atoms:
        before = Counter(a for m in reactants for a in m.atoms)
        if before != Counter(atoms):
            raise InvalidProduct(rule.name, ["atom multiset not conserved"])
    return Outcome(products)


def react(rule: ReactionRule, reactants: list[Molecule], rng: np.random.Generator,
          max_products: int = DEFAULT_MAX_PRODUCTS) -> Outcome:
    binding = match_reactants(rule, reactants, rng)
    if binding is None:
        return Outcome(None, "no-match")
    if not evaluate_guard(rule.guard, binding):
        return Outcome(None, "guard")
    return build_products(rule, reactants, binding, max_products)


def apply_reaction(rule: ReactionRule, reactants: list[Molecule], rng: np.random.Generator,
                   max_products: int = DEFAULT_MAX_PRODUCTS) -> list[Molecule] | None:
    """Products of one application, or None when the rule is not applicable."""
    return react(rule, reactants, rng, max_products).products


def is_applicable(rule: ReactionRule, reactants: list[Molecule], limit: int | None = None,
                  max_products: int = DEFAULT_MAX_PRODUCTS) -> bool:
    """True when some embedding passes the guard and yields products."""
    for binding in enumerate_bindings(rule, reactants, limit):
        if evaluate_guard(rule.guard, binding) and build_products(rule, reactants, binding, max_products).ok:
            return True
    return False


# ---------------------------------------------------------------------------
# validation


def rule_diagnostics(rule: ReactionRule) -> list[Diagnostic]:
    out: list[Diagnostic] = []

    def err(code, msg):
        out.append(Diagnostic(code, f"rule {rule.name!r}: {msg}"))

    if not rule.reactant_patterns:
        err("arity", "needs at least one reactant pattern")
    if not rule.probability_weight > 0 or not math.isfinite(rule.probability_weight):
        err("bad-weight", "probability weight must be positive and finite")
    if rule.kind not in KINDS:
        err("bad-kind", f"unknown kind {rule.kind!r}")
    mols: dict[str, GraphPattern] = {}
    weight_vars: set[str] = set()
    for pat in rule.reactant_patterns:
        if pat.var in mols:
            err("duplicate-variable", f"molecule variable {pat.var!r} bound twice")
        mols[pat.var] = pat
        names = [a.name for a in pat.atoms]
        if len(set(names)) != len(names):
            err("duplicate-variable", f"atom names repeat in pattern {pat.var!r}")
        if not pat.atoms:
            err("empty-pattern", f"pattern {pat.var!r} has no atoms")
        seen_pairs = set()
        for b in pat.bonds:
            if b.a not in names or b.b not in names:
                err("unbound-variable", f"bond {b.a}-{b.b} uses an undeclared atom")
            if b.a == b.b:
                err("pattern-self-loop", f"bond {b.a}-{b.b} joins an atom to itself")
            pair = frozenset((b.a, b.b))
            if pair in seen_pairs:
                err("pattern-parallel-bond", f"bond {b.a}-{b.b} listed twice")
            seen_pairs.add(pair)
            if b.lo > b.hi:
                err("bad-range", f"empty weight range on {b.a}-{b.b}")
            if b.var is not None:
                if b.var in weight_vars:
                    err("duplicate-variable", f"weight variable {b.var!r} bound twice")
                weight_vars.add(b.var)
    bound = set(weight_vars) | {"@" + m for m in mols}
    for v in sorted(rule.guard.variables() - bound):
        err("unbound-variable", f"guard uses unbound {v.lstrip('@')!r}")

    def check_ref(ref: AtomRef):
        pat = mols.get(ref.mol)
        if pat is None:
            err("unbound-variable", f"{ref}: unknown molecule variable")
            return False
        if ref.atom not in {a.name for a in pat.atoms}:
            err("unbound-variable", f"{ref}: unknown atom")
            return False
        return True

    def pattern_bond(a: AtomRef, b: AtomRef) -> bool:
        if a.mol != b.mol:
            return False
        return any({pb.a, pb.b} == {a.atom, b.atom} for pb in mols[a.mol].bonds)

    for act in rule.actions:
        if isinstance(act, (BreakBond, SetWeight)):
            if check_ref(act.a) & check_ref(act.b) and not pattern_bond(act.a, act.b):
                err("unmatched-bond", f"'{act}' must name a bond required by a pattern")
        elif isinstance(act, MakeBond):
            if check_ref(act.a) & check_ref(act.b) and act.a == act.b:
                err("self-loop", f"'{act}' joins an atom to itself")
        if isinstance(act, (MakeBond, SetWeight)):
            for v in sorted(act.weight.variables() - bound):
                err("unbound-variable", f"'{act}' uses unbound {v.lstrip('@')!r}")
        if isinstance(act, (CopyMolecule, DeleteMolecule)) and act.mol not in mols:
            err("unbound-variable", f"'{act}': unknown molecule variable")
        if isinstance(act, HeatAll) and not math.isfinite(act.threshold):
            err("bad-threshold", "heat threshold must be finite")
    if rule.conserves_atoms and any(isinstance(a, _CREATES_OR_DESTROYS) for a in rule.actions):
        err("not-conservative", "'conserve' cannot be combined with copy/add/delete")
    return out


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<label>[A-Z][A-Za-z0-9_]*)"
    r"|(?P<ident>[a-z_][A-Za-z0-9_]*)"
    r"|(?P<op>=>|==|!=|<=|>=|[-+()\[\]:|;,.=<>*!@])"
)


@dataclass
class _Tok:
    kind: str
    value: str
    col: int


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks: list[_Tok] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", 1, pos + 1, code="rule-syntax")
            if m.lastgroup != "ws":
                self.toks.append(_Tok(m.lastgroup, m.group(), pos + 1))
            pos = m.end()
        self.toks.append(_Tok("eof", "", len(text) + 1))
        self.i = 0
        self.anon = 0

    # token helpers
    def peek(self, value: str | None = None, kind: str | None = None, ahead: int = 0) -> bool:
        t = self.toks[min(self.i + ahead, len(self.toks) - 1)]
        return (value is None or t.value == value) and (kind is None or t.kind == kind)

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str | None = None, kind: str | None = None, what: str | None = None) -> _Tok:
        t = self.toks[self.i]
        if (value is not None and t.value != value) or (kind is not None and t.kind != kind):
            want = what or (repr(value) if value is not None else kind)
            got = repr(t.value) if t.value else "end of rule"
            raise ParseError(f"expected {want}, found {got}", 1, t.col, code="rule-syntax")
        self.i += 1
        return t

    def fail(self, msg: str, code: str = "rule-syntax"):
        raise ParseError(msg, 1, self.toks[self.i].col, code=code)

    # grammar
    def rule(self, allow_region: bool) -> ReactionRule:
        self.expect("rule", what="'rule'")
        name = self.take()
        if name.kind not in ("ident", "label"):
            raise ParseError("expected a rule name", 1, name.col, code="rule-syntax")
        region = None
        if self.peek("@"):
            at = self.take()
            if not allow_region:
                raise ParseError("regions are only allowed in membrane chemistries", 1, at.col, code="unexpected-region")
            tok = self.expect(kind="num", what="a region label")
            if not tok.value.isdigit():
                raise ParseError("region must be an integer label", 1, tok.col, code="rule-syntax")
            region = int(tok.value)
        self.expect(":")
        patterns = [self.pattern()]
        while self.peek("+"):
            self.take()
            patterns.append(self.pattern())
        guard: GuardExpr = TRUE
        if self.peek("|"):
            self.take()
            guard = self.guard()
        self.expect("=>")
        opts = dict(actions=[], p=1.0, kind="general", conserve=False, routing=(), delta=False)
        if not self.peek(kind="eof"):
            self.action(opts)
            while self.peek(";"):
                self.take()
                if self.peek(kind="eof"):
                    break
                self.action(opts)
        if not self.peek(kind="eof"):
            self.fail(f"unexpected {self.toks[self.i].value!r}")
        return ReactionRule(
            name=name.value,
            reactant_patterns=tuple(patterns),
            guard=guard,
            actions=tuple(opts["actions"]),
            probability_weight=opts["p"],
            kind=opts["kind"],
            conserves_atoms=opts["conserve"],
            region=region,
            routing=tuple(opts["routing"]),
            dissolves=opts["delta"],
        )

    def pattern(self) -> GraphPattern:
        self.expect("(")
        var = self.expect(kind="ident", what="a molecule variable").value
        self.expect(":")
        atoms: list[PatternAtom] = []
        bonds: list[PatternBond] = []
        names: dict[str, PatternAtom] = {}
        self.element(atoms, bonds, names)
        while self.peek(","):
            self.take()
            self.element(atoms, bonds, names)
        self.expect(")")
        exact = False
        if self.peek("!"):
            self.take()
            exact = True
        return GraphPattern(var, tuple(atoms), tuple(bonds), exact)

    def atom_term(self, atoms, names) -> str:
        t = self.take()
        if t.kind == "ident" and self.peek("="):
            self.take()
            lab = self.take()
            if lab.kind == "label":
                label = lab.value
            elif lab.value == "*":
                label = None
            else:
                raise ParseError("expected an atom label or '*'", 1, lab.col, code="rule-syntax")
            if t.value in names:
                raise ParseError(f"atom name {t.value!r} declared twice", 1, t.col, code="duplicate-variable")
            atom = PatternAtom(t.value, label)
            names[t.value] = atom
            atoms.append(atom)
            return t.value
        if t.kind == "label":
            if t.value not in names:
                atom = PatternAtom(t.value, t.value)
                names[t.value] = atom
                atoms.append(atom)
            return t.value
        if t.value == "*":
            self.anon += 1
            name = f"_{self.anon}"
            while name in names:
                self.anon += 1
                name = f"_{self.anon}"
            atom = PatternAtom(name, None)
            names[name] = atom
            atoms.append(atom)
            return name
        if t.kind == "ident":
            if t.value not in names:
                raise ParseError(f"unknown atom name {t.value!r}", 1, t.col, code="unbound-variable")
            return t.value
        raise ParseError(f"expected an atom, found {t.value or 'end of rule'!r}", 1, t.col, code="rule-syntax")

    def element(self, atoms, bonds, names) -> None:
        chain = [self.atom_term(atoms, names)]
        while self.peek("-"):
            self.take()
            chain.append(self.atom_term(atoms, names))
        var = None
        lo, hi = -math.inf, math.inf
        if self.peek(kind="ident") and not self.peek("in"):
            var = self.take().value
        if self.peek("in"):
            self.take()
            self.expect("[")
            lo = self.signed_number()
            self.expect(",")
            hi = self.signed_number()
            self.expect("]")
        if len(chain) == 1:
            if var is not None or lo != -math.inf or hi != math.inf:
                self.fail("a weight variable or range needs a bond")
            return
        if len(chain) > 2 and (var is not None or lo != -math.inf or hi != math.inf):
            self.fail("annotate bonds one at a time ('A-B w1, B-C w2')")
        for a, b in zip(chain, chain[1:]):
            bonds.append(PatternBond(a, b, var, lo, hi))

    def signed_number(self) -> float:
        sign = 1.0
        if self.peek("-"):
            self.take()
            sign = -1.0
        t = self.take()
        if t.kind == "num":
            return sign * float(t.value)
        if t.value == "inf":
            return sign * math.inf
        raise ParseError("expected a number", 1, t.col, code="rule-syntax")

    # guards
    def guard(self) -> GuardExpr:
        items = [self.conj()]
        while self.peek("or"):
            self.take()
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self) -> GuardExpr:
        items = [self.negation()]
        while self.peek("and"):
            self.take()
            items.append(self.negation())
        return items[0] if len(items) == 1 else And(tuple(items))

    def negation(self) -> GuardExpr:
        if self.peek("not"):
            self.take()
            return Not(self.negation())
        if self.peek("true"):
            self.take()
            return Truth(True)
        if self.peek("false"):
            self.take()
            return Truth(False)
        if self.peek("("):
            self.take()
            inner = self.guard()
            self.expect(")")
            return inner
        left = self.sum()
        t = self.take()
        if t.value not in _COMPARE:
            raise ParseError("expected a comparison operator", 1, t.col, code="rule-syntax")
        return Compare("==" if t.value == "=" else t.value, left, self.sum())

    def sum(self) -> NumExpr:
        terms = []
        sign = 1
        if self.peek("-"):
            self.take()
            sign = -1
        terms.append((sign, self.term()))
        while self.peek("+") or self.peek("-"):
            sign = 1 if self.take().value == "+" else -1
            terms.append((sign, self.term()))
        if len(terms) == 1 and terms[0][0] == 1:
            return terms[0][1]
        if len(terms) == 1 and isinstance(terms[0][1], Const):
            return Const(-terms[0][1].value)
        return Sum(tuple(terms))

    def term(self) -> NumExpr:
        t = self.take()
        if t.kind == "num":
            return Const(float(t.value))
        if t.value == "inf":
            return Const(math.inf)
        if t.value == "atoms" and self.peek("("):
            self.take()
            mol = self.expect(kind="ident", what="a molecule variable").value
            self.expect(")")
            return AtomCount(mol)
        if t.kind == "ident" and t.value not in ("and", "or", "not"):
            return WeightVar(t.value)
        raise ParseError(f"expected a number or weight variable, found {t.value or 'end of rule'!r}",
                         1, t.col, code="rule-syntax")

    # actions
    def atom_ref(self) -> AtomRef:
        mol = self.expect(kind="ident", what="a molecule variable").value
        self.expect(".")
        t = self.take()
        if t.kind not in ("ident", "label"):
            raise ParseError("expected an atom name", 1, t.col, code="rule-syntax")
        return AtomRef(mol, t.value)

    def bond_pair(self) -> tuple[AtomRef, AtomRef]:
        a = self.atom_ref()
        self.expect("-")
        return a, self.atom_ref()

    def action(self, opts) -> None:
        t = self.toks[self.i]
        word = t.value
        if word == "break":
            self.take()
            opts["actions"].append(BreakBond(*self.bond_pair()))
        elif word == "bond":
            self.take()
            a, b = self.bond_pair()
            opts["actions"].append(MakeBond(a, b, self.sum()))
        elif word == "set":
            self.take()
            a, b = self.bond_pair()
            opts["actions"].append(SetWeight(a, b, self.sum()))
        elif word == "heat":
            self.take()
            opts["actions"].append(HeatAll(self.signed_number()))
        elif word == "copy":
            self.take()
            opts["actions"].append(CopyMolecule(self.expect(kind="ident", what="a molecule variable").value))
        elif word == "delete":
            self.take()
            opts["actions"].append(DeleteMolecule(self.expect(kind="ident", what="a molecule variable").value))
        elif word == "add":
            self.take()
            opts["actions"].append(AddAtom(self.expect(kind="label", what="an atom label").value))
        elif word == "p":
            self.take()
            self.expect("=")
            num = self.expect(kind="num", what="a positive number")
            opts["p"] = float(num.value)
            if not opts["p"] > 0:
                raise ParseError("probability weight must be positive", 1, num.col, code="bad-weight")
        elif word == "kind":
            self.take()
            self.expect("=")
            k = self.expect(kind="ident", what="a rule kind")
            if k.value not in KINDS:
                raise ParseError(f"unknown kind {k.value!r}", 1, k.col, code="bad-kind")
            opts["kind"] = k.value
        elif word == "conserve":
            self.take()
            opts["conserve"] = True
        elif word in ("delta", "dissolve"):
            self.take()
            opts["delta"] = True
        elif word == "route":
            self.take()
            targets = [self.target()]
            while self.peek(","):
                self.take()
                targets.append(self.target())
            opts["routing"] = tuple(targets)
        else:
            self.fail(f"unknown action {word or 'end of rule'!r}", code="unknown-action")

    def target(self):
        from .psystem import HERE, OUT, inside

        t = self.expect(kind="ident", what="a target (here, out, in_J)")
        if t.value == "here":
            return HERE
        if t.value == "out":
            return OUT
        m = re.fullmatch(r"in_(\d+)", t.value)
        if m:
            return inside(int(m.group(1)))
        if t.value in ("in", "in_") and self.peek(kind="num"):
            return inside(int(self.take().value))
        raise ParseError(f"unknown target {t.value!r}", 1, t.col, code="unknown-target")


def parse_reaction_rule(text: str, allow_region: bool = False) -> ReactionRule:
    """Parse one rule; error columns are 1-based within *text*."""
    return _Parser(text).rule(allow_region)


def parse_guard(text: str) -> GuardExpr:
    p = _Parser(text)
    g = p.guard()
    if not p.peek(kind="eof"):
        p.fail(f"unexpected {p.toks[p.i].value!r}")
    return g
