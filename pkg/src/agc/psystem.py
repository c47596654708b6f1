"""Classic P systems: symbol multisets evolving by maximal parallel rewriting.

Rule text form::

    a b -> (b,here) (c,in_2) delta @ region 1 [p=1.0]

A bare right-hand symbol means ``(sym,here)``.  When the alphabet is known,
a run of single-character symbols may be written together (``ca`` for
``c a``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import kernels
from .errors import (
    AlreadyHalted,
    CountOverflow,
    Diagnostic,
    InvalidCatalystDeclaration,
    OutputRegionDissolved,
    ParseError,
    SkinDissolution,
    ValidationErrors,
)
from .membrane import MembraneStructure, canonical_text, dissolve_membrane
from .multiset import Multiset
from .trace import Snapshot, Trace


@dataclass(frozen=True)
class Target:
    kind: str  # "here" | "out" | "in"
    label: int | None = None

    def __str__(self) -> str:
        return f"in_{self.label}" if self.kind == "in" else self.kind


HERE = Target("here")
OUT = Target("out")


def inside(label: int) -> Target:
    return Target("in", label)


@dataclass(frozen=True)
class EvolutionRule:
    region: int
    lhs: Multiset
    rhs: tuple[tuple[str, Target], ...] = ()
    dissolves: bool = False
    probability_weight: float = 1.0

    @property
    def radius(self) -> int:
        return self.lhs.cardinality

    def products(self) -> Multiset:
        return Multiset(sym for sym, _ in self.rhs)

    def __str__(self) -> str:
        lhs = " ".join(sym for sym in sorted(self.lhs) for _ in range(self.lhs[sym]))
        parts = [lhs, "->"]
        parts.extend(f"({sym},{tgt})" for sym, tgt in self.rhs)
        if self.dissolves:
            parts.append("delta")
        parts.append(f"@ region {self.region}")
        if self.probability_weight != 1.0:
            parts.append(f"[p={self.probability_weight!r}]")
        return " ".join(parts)


_TOKEN = re.compile(
    r"\s*(?:(?P<arrow>->|→)|(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_']*)|(?P<delta>δ)|(?P<punct>[(),@\[\]=]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[col - 1]!r}", 1, col, code="rule-syntax")
        kind = m.lastgroup
        value = m.group(kind)
        toks.append((kind, value, m.start(kind) + 1))
        pos = m.end()
    toks.append(("eof", "", len(text) + 1))
    return toks


def _split_symbols(tok: str, col: int, alphabet) -> list[str]:
    if alphabet is None or tok in alphabet:
        return [tok]
    if all(ch in alphabet for ch in tok):
        return list(tok)
    raise ParseError(f"unknown symbol {tok!r}", 1, col, code="unknown-symbol")


def parse_evolution_rule(text: str, alphabet: Iterable[str] | None = None,
                         region: int | None = None) -> EvolutionRule:
    """Parse one classic rule; columns in errors are 1-based within *text*."""
    alphabet = None if alphabet is None else frozenset(alphabet)
    toks = _tokenize(text)
    i = 0

    def peek(kind=None, value=None):
        k, v, _ = toks[i]
        return (kind is None or k == kind) and (value is None or v == value)

    def expect(kind, value=None):
        nonlocal i
        k, v, c = toks[i]
        if k != kind or (value is not None and v != value):
            want = value or kind
            got = v or "end of rule"
            raise ParseError(f"expected {want!r}, found {got!r}", 1, c, code="rule-syntax")
        i += 1
        return v, c

    lhs: list[str] = []
    while peek("name"):
        v, c = expect("name")
        lhs.extend(_split_symbols(v, c, alphabet))
    if not lhs:
        raise ParseError("rule needs a non-empty left-hand side", 1, toks[i][2], code="empty-lhs")
    expect("arrow")
    rhs: list[tuple[str, Target]] = []
    dissolves = False
    while True:
        if peek("punct", "("):
            expect("punct", "(")
            sym, c = expect("name")
            if alphabet is not None and sym not in alphabet:
                raise ParseError(f"unknown symbol {sym!r}", 1, c, code="unknown-symbol")
            expect("punct", ",")
            tv, tc = expect("name")
            if tv == "here":
                tgt = HERE
            elif tv == "out":
                tgt = OUT
            elif tv == "in" or re.fullmatch(r"in_?\d+", tv):
                digits = tv[2:].lstrip("_")
                if not digits:
                    digits, _ = expect("num")
                if not digits.isdigit():
                    raise ParseError("membrane label must be an integer", 1, tc, code="rule-syntax")
                tgt = inside(int(digits))
            else:
                raise ParseError(f"unknown target {tv!r}", 1, tc, code="unknown-target")
            expect("punct", ")")
            rhs.append((sym, tgt))
        elif peek("name") and not peek("name", "delta"):
            v, c = expect("name")
            rhs.extend((s, HERE) for s in _split_symbols(v, c, alphabet))
        else:
            break
    if peek("name", "delta") or peek("delta"):
        dissolves = True
        i += 1
    if peek("punct", "@"):
        expect("punct", "@")
        if peek("name", "region"):
            expect("name", "region")
        v, c = expect("num")
        if not v.isdigit():
            raise ParseError("region must be an integer label", 1, c, code="rule-syntax")
        region = int(v)
    weight = 1.0
    if peek("punct", "["):
        expect("punct", "[")
        expect("name", "p")
        expect("punct", "=")
        v, c = expect("num")
        weight = float(v)
        if not weight > 0:
            raise ParseError("probability weight must be positive", 1, c, code="bad-weight")
        expect("punct", "]")
    if not peek("eof"):
        raise ParseError(f"unexpected {toks[i][1]!r}", 1, toks[i][2], code="rule-syntax")
    if region is None:
        raise ParseError("rule has no region ('@ region N')", 1, len(text) + 1, code="missing-region")
    return EvolutionRule(region, Multiset(lhs), tuple(rhs), dissolves, weight)


@dataclass(frozen=True)
class PSystem:
    alphabet: frozenset[str]
    structure: MembraneStructure
    initial_contents: dict[int, Multiset]
    rules: dict[int, tuple[EvolutionRule, ...]]
    output_region: int
    catalysts: frozenset[str] | None = None

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValidationErrors(problems)

    def validate(self) -> list[Diagnostic]:
        out: list[Diagnostic] = []
        ms = self.structure
        if self.output_region not in ms:
            out.append(Diagnostic("unknown-label", f"output region {self.output_region} is not a membrane"))
        for label, content in self.initial_contents.items():
            if label not in ms:
                out.append(Diagnostic("unknown-label", f"contents given for missing membrane {label}"))
            for sym in content:
                if sym not in self.alphabet:
                    out.append(Diagnostic("unknown-symbol", f"symbol {sym!r} in region {label} not in alphabet"))
        for label, rules in self.rules.items():
            if label not in ms:
                out.append(Diagnostic("unknown-label", f"rules given for missing membrane {label}"))
                continue
            for rule in rules:
                out.extend(rule_diagnostics(rule, ms, self.alphabet))
        return out

    def initial_configuration(self) -> "Configuration":
        labels = self.structure.labels
        return Configuration(
            structure=self.structure,
            contents={lab: self.initial_contents.get(lab, Multiset()) for lab in labels},
            live_rules={lab: tuple(self.rules.get(lab, ())) for lab in labels},
        )


def rule_diagnostics(rule: EvolutionRule, ms: MembraneStructure, alphabet=None) -> list[Diagnostic]:
    out = []
    if rule.region not in ms:
        out.append(Diagnostic("unknown-label", f"rule region {rule.region} is not a membrane"))
        return out
    if not rule.lhs:
        out.append(Diagnostic("empty-lhs", "rule has an empty left-hand side"))
    if rule.dissolves and rule.region == ms.skin:
        out.append(Diagnostic("skin-dissolution", "a rule in the skin region may not dissolve its membrane"))
    if not rule.probability_weight > 0:
        out.append(Diagnostic("bad-weight", "probability weight must be positive"))
    for sym, tgt in rule.rhs:
        if tgt.kind == "in" and tgt.label not in ms:
            out.append(Diagnostic("unknown-label", f"target in_{tgt.label} names no membrane"))
    if alphabet is not None:
        for sym in list(rule.lhs) + [s for s, _ in rule.rhs]:
            if sym not in alphabet:
                out.append(Diagnostic("unknown-symbol", f"symbol {sym!r} not in alphabet"))
    return out


@dataclass(frozen=True)
class Configuration:
    structure: MembraneStructure
    contents: dict[int, Multiset]
    live_rules: dict[int, tuple[EvolutionRule, ...]]
    step_index: int = 0
    halted: bool = False
    expelled: Multiset = field(default_factory=Multiset)

    def snapshot(self) -> Snapshot:
        return Snapshot(
            step=self.step_index,
            regions={lab: m.to_dict() for lab, m in sorted(self.contents.items())},
            structure=canonical_text(self.structure),
            expelled=self.expelled.to_dict(),
        )


@dataclass
class StepReport:
    step: int
    applications: dict[int, dict[int, int]] = field(default_factory=dict)
    consumed: dict[int, Multiset] = field(default_factory=dict)
    delivered: dict[int, Multiset] = field(default_factory=dict)
    expelled: Multiset = field(default_factory=Multiset)
    dissolved: tuple[int, ...] = ()
    rules: dict[int, tuple[EvolutionRule, ...]] = field(default_factory=dict, repr=False)

    @property
    def vacuous(self) -> bool:
        return not any(n for apps in self.applications.values() for n in apps.values())

    def to_record(self) -> dict:
        reactions = []
        apps = []
        for region in sorted(self.applications):
            for idx, n in sorted(self.applications[region].items()):
                rule = self.rules[region][idx]
                apps.append({"region": region, "rule": str(rule), "count": n})
                reactions.append([
                    sorted(s for s in rule.lhs for _ in range(rule.lhs[s])),
                    sorted(s for s, _ in rule.rhs),
                ])
        return {
            "type": "event",
            "kind": "step",
            "step": self.step,
            "applications": apps,
            "consumed": {str(k): v.to_dict() for k, v in sorted(self.consumed.items())},
            "delivered": {str(k): v.to_dict() for k, v in sorted(self.delivered.items())},
            "expelled": self.expelled.to_dict(),
            "dissolved": list(self.dissolved),
            "reactions": reactions,
        }


def _targets_valid(rule: EvolutionRule, structure: MembraneStructure) -> bool:
    kids = None
    for _, tgt in rule.rhs:
        if tgt.kind == "in":
            if kids is None:
                kids = structure.children(rule.region)
            if tgt.label not in kids:
                return False
    return True


def rule_applicable(rule: EvolutionRule, config: Configuration) -> bool:
    if rule.region not in config.structure:
        return False
    if not config.contents[rule.region].contains(rule.lhs):
        return False
    return _targets_valid(rule, config.structure)


def any_applicable(config: Configuration) -> bool:
    return any(rule_applicable(r, config) for rules in config.live_rules.values() for r in rules)


def _region_applications(rules, contents: Multiset, structure, rng) -> np.ndarray:
    symbols = sorted({s for r in rules for s in r.lhs})
    index = {s: k for k, s in enumerate(symbols)}
    lhs = np.zeros((len(rules), len(symbols)), dtype=np.int64)
    for r, rule in enumerate(rules):
        for s, n in rule.lhs.items():
            lhs[r, index[s]] = n
    counts = np.array([contents[s] for s in symbols], dtype=np.int64)
    enabled = np.array([_targets_valid(rule, structure) for rule in rules], dtype=np.bool_)
    seed = rng.integers(0, 2**64, dtype=np.uint64)
    return kernels.greedy_applications(lhs, counts, enabled, seed)


def maximal_parallel_step(config: Configuration, rng: np.random.Generator) -> tuple[Configuration, StepReport]:
    """One synchronous, maximally parallel step of every region.

    Each region picks its application multiset by seeded randomized greedy:
    repeatedly apply a uniformly chosen rule that still fits the residual
    until none does.
    """
    if config.halted:
        raise AlreadyHalted("configuration is halted")
    structure = config.structure
    step = config.step_index + 1
    if not any_applicable(config):
        return replace(config, halted=True), StepReport(step=config.step_index)

    report = StepReport(step=step, rules=dict(config.live_rules))
    contents = {lab: dict(m) for lab, m in config.contents.items()}
    delivered: dict[int, dict[str, int]] = {}
    expelled: dict[str, int] = {}
    dissolving = []
    for label in sorted(config.live_rules):
        rules = config.live_rules[label]
        if not rules:
            continue
        counts = _region_applications(rules, config.contents[label], structure, rng)
        used = {k: int(n) for k, n in enumerate(counts) if n}
        if not used:
            continue
        report.applications[label] = used
        consumed: dict[str, int] = {}
        for k, n in used.items():
            rule = rules[k]
            for sym, q in rule.lhs.items():
                consumed[sym] = consumed.get(sym, 0) + q * n
            for sym, tgt in rule.rhs:
                if tgt.kind == "here":
                    dest = label
                elif tgt.kind == "out":
                    dest = structure.parent(label)
                else:
                    dest = tgt.label
                if dest is None:
                    expelled[sym] = expelled.get(sym, 0) + n
                else:
                    bucket = delivered.setdefault(dest, {})
                    bucket[sym] = bucket.get(sym, 0) + n
            if rule.dissolves:
                if label == structure.skin:
                    raise SkinDissolution("rule would dissolve the skin")
                dissolving.append(label)
        report.consumed[label] = Multiset(consumed)
        region = contents[label]
        for sym, q in consumed.items():
            region[sym] -= q
    for dest, objs in delivered.items():
        region = contents[dest]
        for sym, q in objs.items():
            region[sym] = region.get(sym, 0) + q
    report.delivered = {k: Multiset(v) for k, v in delivered.items()}
    report.expelled = Multiset(expelled)

    live_rules = dict(config.live_rules)
    # bottom-up, so a dissolving child's contents cascade through a dissolving parent
    for label in sorted(set(dissolving), key=lambda lab: (-structure.depth(lab), lab)):
        parent = structure.parent(label)
        target = contents[parent]
        for sym, q in contents.pop(label).items():
            target[sym] = target.get(sym, 0) + q
        del live_rules[label]
        structure = dissolve_membrane(structure, label)
    report.dissolved = tuple(sorted(set(dissolving)))

    new = Configuration(
        structure=structure,
        contents={lab: Multiset(c) for lab, c in contents.items()},
        live_rules=live_rules,
        step_index=step,
        expelled=config.expelled + report.expelled,
    )
    return replace(new, halted=not any_applicable(new)), report


def run_psystem(system: PSystem, seed: int, max_steps: int, sample_every: int = 1) -> Trace:
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    rng = np.random.default_rng(seed)
    config = system.initial_configuration()
    trace = Trace(mode="classic", seed=seed)
    trace.configurations = [config]
    trace.snapshots.append(config.snapshot())
    reason = None
    while config.step_index < max_steps and not config.halted:
        try:
            config, report = maximal_parallel_step(config, rng)
        except CountOverflow:
            reason = "count-overflow"
            break
        if report.vacuous:
            trace.configurations[-1] = config
            break
        trace.configurations.append(config)
        if config.step_index % sample_every == 0:
            trace.snapshots.append(config.snapshot())
        trace.events.append(report)
    if not config.halted and not any_applicable(config):
        config = replace(config, halted=True)
        trace.configurations[-1] = config
    if trace.snapshots[-1].step != config.step_index:
        trace.snapshots.append(config.snapshot())
    trace.halted = config.halted
    trace.reason = reason or ("halted" if config.halted else "max-steps")
    return trace


def read_output(config: Configuration, system: PSystem) -> Multiset:
    if system.output_region not in config.structure:
        raise OutputRegionDissolved(f"output membrane {system.output_region} was dissolved")
    return config.contents[system.output_region]


def check_catalysts(rules: Iterable[EvolutionRule], catalysts: Iterable[str]) -> list[str]:
    """Return the ways the rule set breaks the catalytic form for *catalysts*."""
    cats = frozenset(catalysts)
    problems = []
    if not cats:
        problems.append("catalyst set is empty")
    for rule in rules:
        products = [sym for sym, _ in rule.rhs]
        lhs_cats = [s for s in rule.lhs if s in cats]
        if rule.radius == 1:
            if lhs_cats:
                problems.append(f"{rule}: catalyst {lhs_cats[0]!r} evolves alone")
            elif any(s in cats for s in products):
                problems.append(f"{rule}: product side contains a catalyst")
        elif rule.radius == 2 and len(lhs_cats) == 1 and rule.lhs[lhs_cats[0]] == 1:
            c = lhs_cats[0]
            kept = [(s, t) for s, t in rule.rhs if s in cats]
            if kept != [(c, HERE)]:
                problems.append(f"{rule}: catalyst {c!r} must be returned unchanged to its region")
        else:
            problems.append(f"{rule}: radius {rule.radius} rule is not of the form 'c a -> c v'")
    return problems


def classify_system(system: PSystem) -> str | tuple[str, frozenset[str]]:
    """Return ``"NonCooperative"``, ``"Cooperative"`` or ``("Catalytic", C)``."""
    rules = [r for rs in system.rules.values() for r in rs]
    if system.catalysts is not None:
        problems = check_catalysts(rules, system.catalysts)
        if problems:
            raise InvalidCatalystDeclaration("; ".join(problems))
    if all(r.radius == 1 for r in rules):
        return "NonCooperative"
    if system.catalysts:
        return ("Catalytic", frozenset(system.catalysts))
    return "Cooperative"
