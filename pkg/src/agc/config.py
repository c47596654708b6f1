"""Chemistry definition files.

A chemistry is a YAML mapping.  The membrane string, classic rules,
reaction rules and molecules are embedded as strings in their own small
grammars (see docs/grammar.md).  Loading collects every problem it can
find before failing, each with a line and column in the YAML file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .engine import AgcSystem, run_agc
from .errors import AgcError, CorruptTrace, Diagnostic, IoFailure, ParseError, ValidationErrors
from .membrane import MembraneStructure, canonical_text, parse_membrane
from .molecule import Molecule, format_molecule, parse_molecule, validate_molecule
from .multiset import Multiset
from .psystem import EvolutionRule, PSystem, check_catalysts, parse_evolution_rule, rule_diagnostics, run_psystem
from .reaction import AddAtom, ReactionRule, parse_reaction_rule
from .reaction import rule_diagnostics as reaction_diagnostics
from .reactor import Params, ReactorState, run_reactor
from .trace import Trace

FORMAT = "agc-chemistry/1"
MODES = ("classic", "reactor", "agc")
REGION_SELECTION = ("uniform", "population")

_KEYS = {
    "classic": {"format", "mode", "membrane", "alphabet", "catalysts", "output", "contents", "rules", "parameters"},
    "reactor": {"format", "mode", "atoms", "population", "rules", "parameters"},
    "agc": {"format", "mode", "membrane", "atoms", "population", "rules", "parameters"},
}
_REQUIRED = {
    "classic": ("membrane", "alphabet", "rules"),
    "reactor": ("atoms", "population", "rules"),
    "agc": ("membrane", "atoms", "population", "rules"),
}


@dataclass
class ChemistryDefinition:
    mode: str
    membrane: MembraneStructure | None = None
    alphabet: tuple[str, ...] = ()            # classic symbols or atom labels
    catalysts: tuple[str, ...] | None = None
    output: int | None = None
    contents: dict[int, Multiset] = field(default_factory=dict)
    population: dict[int, list[tuple[Molecule, int]]] = field(default_factory=dict)  # reactor uses region 1
    rules: list[Any] = field(default_factory=list)
    params: Params = field(default_factory=Params)

    def psystem(self) -> PSystem:
        by_region: dict[int, list[EvolutionRule]] = {}
        for r in self.rules:
            by_region.setdefault(r.region, []).append(r)
        return PSystem(
            alphabet=frozenset(self.alphabet),
            structure=self.membrane,
            initial_contents=dict(self.contents),
            rules={k: tuple(v) for k, v in by_region.items()},
            output_region=self.output if self.output is not None else self.membrane.skin,
            catalysts=None if self.catalysts is None else frozenset(self.catalysts),
        )

    def reactor(self, seed: int) -> ReactorState:
        return ReactorState.create(self.population.get(1, []), self.rules, seed, self.params)

    def agc_system(self) -> AgcSystem:
        by_region: dict[int, list[ReactionRule]] = {}
        for r in self.rules:
            by_region.setdefault(r.region, []).append(r)
        return AgcSystem(self.membrane, dict(self.population), by_region, self.params)


# ---------------------------------------------------------------------------
# loading


class _Ctx:
    def __init__(self):
        self.diags: list[Diagnostic] = []
        self._loader = yaml.SafeLoader("")

    def err(self, node, code: str, message: str, col_offset: int = 0) -> None:
        line, col = (node.start_mark.line + 1, node.start_mark.column + 1) if node is not None else (0, 0)
        self.diags.append(Diagnostic(code, message, line, col + col_offset))

    def value(self, node):
        return self._loader.construct_object(node, deep=True)

    def embedded(self, node, exc: ParseError) -> None:
        # position inside a single-line scalar; quoted scalars start one column later
        shift = 1 if getattr(node, "style", None) in ("'", '"') else 0
        if exc.line > 1 or "\n" in str(self.value(node)):
            self.err(node, exc.code, exc.message)
        else:
            self.err(node, exc.code, exc.message, exc.col - 1 + shift)


def _mapping(ctx: _Ctx, node, what: str) -> dict[Any, tuple[Any, Any]] | None:
    if not isinstance(node, yaml.MappingNode):
        ctx.err(node, "type", f"{what} must be a mapping")
        return None
    out = {}
    for k, v in node.value:
        key = ctx.value(k)
        if key in out:
            ctx.err(k, "duplicate-key", f"duplicate key {key!r} in {what}")
        out[key] = (k, v)
    return out


def _sequence(ctx: _Ctx, node, what: str) -> list | None:
    if not isinstance(node, yaml.SequenceNode):
        ctx.err(node, "type", f"{what} must be a list")
        return None
    return node.value


def _string(ctx: _Ctx, node, what: str) -> str | None:
    if not isinstance(node, yaml.ScalarNode) or not isinstance(ctx.value(node), str):
        ctx.err(node, "type", f"{what} must be a string")
        return None
    return ctx.value(node)


def _label(ctx: _Ctx, node, key, what: str) -> int | None:
    if isinstance(key, bool) or not isinstance(key, int) or key <= 0:
        ctx.err(node, "bad-label", f"{what} must be a positive integer membrane label, got {key!r}")
        return None
    return key


def _symbols(ctx: _Ctx, node, what: str, atoms: bool) -> tuple[str, ...]:
    items = _sequence(ctx, node, what)
    out = []
    for item in items or ():
        s = ctx.value(item)
        ok = isinstance(s, str) and s and (s[0].isupper() if atoms else True) and s.replace("_", "a").isalnum()
        if not ok:
            ctx.err(item, "bad-symbol", f"{s!r} is not a valid {'atom label' if atoms else 'symbol'}")
        elif s in out:
            ctx.err(item, "duplicate-symbol", f"{s!r} listed twice in {what}")
        else:
            out.append(s)
    return tuple(out)


def _params(ctx: _Ctx, node) -> Params:
    p = Params()
    if node is None:
        return p
    m = _mapping(ctx, node, "parameters")
    if m is None:
        return p
    known = {f.name: f for f in fields(Params)}
    for key, (kn, vn) in m.items():
        if key not in known:
            ctx.err(kn, "unknown-key", f"unknown parameter {key!r}")
            continue
        v = ctx.value(vn)
        if key == "region_selection":
            if v not in REGION_SELECTION:
                ctx.err(vn, "bad-parameter", f"region_selection must be one of {', '.join(REGION_SELECTION)}")
                continue
        elif key == "weight_tolerance":
            if isinstance(v, str):
                # YAML 1.1 reads 1e-9 (no dot) as a string
                try:
                    v = float(v)
                except ValueError:
                    pass
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
                ctx.err(vn, "bad-parameter", "weight_tolerance must be a positive finite number")
                continue
            v = float(v)
        elif isinstance(v, bool) or not isinstance(v, int) or v < 1:
            ctx.err(vn, "bad-parameter", f"{key} must be a positive integer")
            continue
        setattr(p, key, v)
    return p


def _molecules(ctx: _Ctx, node, atoms: tuple[str, ...], params: Params) -> list[tuple[Molecule, int]]:
    out = []
    for item in _sequence(ctx, node, "population") or ():
        count_node = None
        count = 1
        if isinstance(item, yaml.MappingNode):
            m = _mapping(ctx, item, "population entry") or {}
            for key, (kn, _) in m.items():
                if key not in ("molecule", "count"):
                    ctx.err(kn, "unknown-key", f"unknown key {key!r} in population entry")
            if "molecule" not in m:
                ctx.err(item, "missing-key", "population entry needs 'molecule'")
                continue
            mol_node = m["molecule"][1]
            if "count" in m:
                count_node = m["count"][1]
                count = ctx.value(count_node)
        else:
            mol_node = item
        text = _string(ctx, mol_node, "molecule")
        if text is None:
            continue
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            ctx.err(count_node, "bad-count", "count must be a positive integer")
            continue
        try:
            mol = parse_molecule(text)
        except ParseError as exc:
            ctx.embedded(mol_node, exc)
            continue
        except AgcError as exc:
            ctx.err(mol_node, exc.code, str(exc))
            continue
        problems = validate_molecule(mol)
        for msg in problems:
            ctx.err(mol_node, "bad-molecule", msg)
        for a in sorted(set(mol.atoms) - set(atoms)):
            ctx.err(mol_node, "unknown-atom", f"atom {a!r} is not in the atom alphabet")
        if len(mol.atoms) > params.max_atoms:
            ctx.err(mol_node, "molecule-too-large", f"molecule has {len(mol.atoms)} atoms, cap is {params.max_atoms}")
        if not problems:
            out.append((mol, count))
    return out


def _reaction_rule_checks(ctx: _Ctx, node, rule: ReactionRule, atoms: tuple[str, ...]) -> None:
    for d in reaction_diagnostics(rule):
        ctx.err(node, d.code, d.message)
    labels = {a.label for p in rule.reactant_patterns for a in p.atoms if a.label is not None}
    labels |= {a.label for a in rule.actions if isinstance(a, AddAtom)}
    for lab in sorted(labels - set(atoms)):
        ctx.err(node, "unknown-atom", f"rule {rule.name!r} uses atom {lab!r} outside the atom alphabet")


def _load_classic(ctx: _Ctx, top: dict, d: ChemistryDefinition) -> None:
    ms = d.membrane
    d.alphabet = _symbols(ctx, top["alphabet"][1], "alphabet", atoms=False)
    if "catalysts" in top:
        cat_node = top["catalysts"][1]
        d.catalysts = _symbols(ctx, cat_node, "catalysts", atoms=False)
        for c in d.catalysts:
            if c not in d.alphabet:
                ctx.err(cat_node, "unknown-symbol", f"catalyst {c!r} is not in the alphabet")
    if "output" in top:
        kn, vn = top["output"]
        d.output = _label(ctx, vn, ctx.value(vn), "output")
        if d.output is not None and ms is not None and d.output not in ms:
            ctx.err(vn, "unknown-label", f"output region {d.output} is not a membrane")
    if "contents" in top:
        for key, (kn, vn) in (_mapping(ctx, top["contents"][1], "contents") or {}).items():
            label = _label(ctx, kn, key, "contents key")
            if label is None:
                continue
            if ms is not None and label not in ms:
                ctx.err(kn, "unknown-label", f"contents given for missing membrane {label}")
            text = ctx.value(vn)
            if text is None:
                text = ""
            if not isinstance(text, str):
                ctx.err(vn, "type", "contents must be a multiset string such as 'a:2, b:1'")
                continue
            try:
                content = Multiset.parse(text)
            except (ValueError, AgcError) as exc:
                ctx.err(vn, "multiset-syntax", str(exc))
                continue
            for sym in content:
                if sym not in d.alphabet:
                    ctx.err(vn, "unknown-symbol", f"symbol {sym!r} in region {label} is not in the alphabet")
            d.contents[label] = content
    rules = []
    for rn in _sequence(ctx, top["rules"][1], "rules") or ():
        text = _string(ctx, rn, "rule")
        if text is None:
            continue
        try:
            rule = parse_evolution_rule(text, d.alphabet)
        except ParseError as exc:
            ctx.embedded(rn, exc)
            continue
        if ms is not None:
            if rule.region not in ms:
                ctx.err(rn, "unknown-label", f"rule placed in missing membrane {rule.region}")
            else:
                for diag in rule_diagnostics(rule, ms, d.alphabet):
                    ctx.err(rn, diag.code, diag.message)
        rules.append((rn, rule))
    d.rules = [r for _, r in rules]
    if d.catalysts is not None:
        for msg in check_catalysts(d.rules, d.catalysts):
            ctx.err(top["catalysts"][1], "invalid-catalyst", msg)


def _load_reactions(ctx: _Ctx, top: dict, d: ChemistryDefinition) -> None:
    ms = d.membrane
    membrane_mode = d.mode == "agc"
    d.alphabet = _symbols(ctx, top["atoms"][1], "atoms", atoms=True)
    pop_node = top["population"][1]
    if membrane_mode:
        for key, (kn, vn) in (_mapping(ctx, pop_node, "population") or {}).items():
            label = _label(ctx, kn, key, "population key")
            if label is None:
                continue
            if ms is not None and label not in ms:
                ctx.err(kn, "unknown-label", f"population given for missing membrane {label}")
            d.population[label] = _molecules(ctx, vn, d.alphabet, d.params)
    else:
        d.population[1] = _molecules(ctx, pop_node, d.alphabet, d.params)
    names = set()
    for rn in _sequence(ctx, top["rules"][1], "rules") or ():
        text = _string(ctx, rn, "rule")
        if text is None:
            continue
        try:
            rule = parse_reaction_rule(text, allow_region=membrane_mode)
        except ParseError as exc:
            ctx.embedded(rn, exc)
            continue
        if rule.name in names:
            ctx.err(rn, "duplicate-rule", f"rule name {rule.name!r} used twice")
        names.add(rule.name)
        _reaction_rule_checks(ctx, rn, rule, d.alphabet)
        if not membrane_mode:
            if rule.routing or rule.dissolves:
                ctx.err(rn, "membrane-only", f"rule {rule.name!r} uses routing or delta outside a membrane chemistry")
        elif ms is not None:
            if rule.region is None:
                rule = _with_region(rule, ms.skin)
            if rule.region not in ms:
                ctx.err(rn, "unknown-label", f"rule {rule.name!r} placed in missing membrane {rule.region}")
            if rule.dissolves and rule.region == ms.skin:
                ctx.err(rn, "skin-dissolution", f"rule {rule.name!r} would dissolve the skin")
            for tgt in rule.routing:
                if tgt.kind == "in" and tgt.label not in ms:
                    ctx.err(rn, "unknown-label", f"rule {rule.name!r} routes into missing membrane {tgt.label}")
        d.rules.append(rule)


def _with_region(rule: ReactionRule, region: int) -> ReactionRule:
    return replace(rule, region=region)


def parse_chemistry(text: str, source: str = "<string>") -> ChemistryDefinition:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (1, 1)
        raise ParseError(f"{source}: {exc.problem or exc.context}", line, col, code="yaml-syntax") from None
    except yaml.YAMLError as exc:
        raise ParseError(f"{source}: {exc}", 1, 1, code="yaml-syntax") from None
    ctx = _Ctx()
    if root is None:
        raise ValidationErrors([Diagnostic("empty-file", f"{source}: no chemistry definition", 1, 1)])
    top = _mapping(ctx, root, "chemistry")
    if top is None:
        raise ValidationErrors(ctx.diags)
    if "format" in top:
        fmt = ctx.value(top["format"][1])
        name, _, major = str(fmt).partition("/")
        if name != "agc-chemistry" or major.split(".")[0] != "1":
            ctx.err(top["format"][1], "bad-format", f"unsupported format {fmt!r}, expected {FORMAT!r}")
    mode = ctx.value(top["mode"][1]) if "mode" in top else None
    if mode not in MODES:
        node = top["mode"][1] if "mode" in top else root
        ctx.err(node, "bad-mode", f"mode must be one of {', '.join(MODES)}")
        raise ValidationErrors(ctx.diags)
    for key, (kn, _) in top.items():
        if key not in _KEYS[mode]:
            ctx.err(kn, "unknown-key", f"key {key!r} is not used in {mode} mode")
    missing = [k for k in _REQUIRED[mode] if k not in top]
    for k in missing:
        ctx.err(root, "missing-key", f"{mode} chemistry needs {k!r}")
    if missing:
        raise ValidationErrors(ctx.diags)
    d = ChemistryDefinition(mode)
    d.params = _params(ctx, top["parameters"][1] if "parameters" in top else None)
    if "membrane" in top:
        node = top["membrane"][1]
        text = _string(ctx, node, "membrane")
        if text is not None:
            try:
                d.membrane = parse_membrane(text)
            except ParseError as exc:
                ctx.embedded(node, exc)
            except AgcError as exc:
                ctx.err(node, exc.code, str(exc))
    if mode == "classic":
        _load_classic(ctx, top, d)
    else:
        _load_reactions(ctx, top, d)
    if ctx.diags:
        raise ValidationErrors(ctx.diags)
    return d


def load_chemistry(path: str | Path) -> ChemistryDefinition:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_chemistry(text, str(path))


# ---------------------------------------------------------------------------
# canonical writing


def _mol_entries(items: list[tuple[Molecule, int]]) -> list[dict]:
    return [{"molecule": format_molecule(m), "count": n} for m, n in items]


def chemistry_to_data(d: ChemistryDefinition) -> dict:
    data: dict[str, Any] = {"format": FORMAT, "mode": d.mode}
    if d.membrane is not None:
        data["membrane"] = str(d.membrane)
    if d.mode == "classic":
        data["alphabet"] = list(d.alphabet)
        if d.catalysts is not None:
            data["catalysts"] = list(d.catalysts)
        if d.output is not None:
            data["output"] = d.output
        data["contents"] = {k: str(v) for k, v in sorted(d.contents.items())}
    else:
        data["atoms"] = list(d.alphabet)
        if d.mode == "reactor":
            data["population"] = _mol_entries(d.population.get(1, []))
        else:
            data["population"] = {k: _mol_entries(v) for k, v in sorted(d.population.items())}
    data["rules"] = [str(r) for r in d.rules]
    defaults = Params()
    params = {f.name: getattr(d.params, f.name) for f in fields(Params)
              if getattr(d.params, f.name) != getattr(defaults, f.name)}
    if params:
        data["parameters"] = params
    return data


def write_chemistry(d: ChemistryDefinition) -> str:
    return yaml.safe_dump(chemistry_to_data(d), sort_keys=False, default_flow_style=False,
                          allow_unicode=True, width=10_000)


def save_chemistry(d: ChemistryDefinition, path: str | Path) -> None:
    try:
        Path(path).write_text(write_chemistry(d), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# orchestration


def run_chemistry(d: ChemistryDefinition, seed: int, steps: int, sample_every: int | None = None) -> Trace:
    """Run any mode; the canonical chemistry text is embedded in the trace header."""
    if sample_every is not None:
        d.params.sample_every = sample_every
    if d.mode == "classic":
        trace = run_psystem(d.psystem(), seed, steps, d.params.sample_every)
    elif d.mode == "reactor":
        trace = run_reactor(d.reactor(seed), seed, steps)
    else:
        trace = run_agc(d.agc_system(), seed, steps)
    trace.header["chemistry"] = write_chemistry(d)
    trace.header["steps"] = steps
    if d.membrane is not None:
        trace.header["membrane"] = canonical_text(d.membrane)
    return trace


def chemistry_from_trace(trace: Trace) -> ChemistryDefinition:
    text = trace.header.get("chemistry")
    if not isinstance(text, str):
        raise CorruptTrace("trace header carries no chemistry")
    return parse_chemistry(text, "<trace header>")
