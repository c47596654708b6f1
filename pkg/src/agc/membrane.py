"""Membrane structures: nested bracket strings read as rooted unordered trees.

Text form::

    [1 [2 ]2 [3 ]3 [4 [5 ]5 [6 ]6 ]4 ]1

Labels are optional decimal digits right after ``[`` and after ``]``;
whitespace is ignored.  Unlabelled membranes receive the smallest unused
positive integers in preorder, so ``[[][]]`` becomes ``[1 [2 ]2 [3 ]3 ]1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

from .errors import (
    DuplicateLabel,
    EmptyInput,
    MembraneError,
    MismatchedLabelPair,
    SkinDissolution,
    UnbalancedBrackets,
    UnknownLabel,
)

# ']' sorts before '[' so that shorter sibling subtrees come first.
_SHAPE_ORDER = str.maketrans("[]", "10")


@dataclass(frozen=True)
class MembraneNode:
    label: int
    children: tuple["MembraneNode", ...] = ()

    def walk(self) -> Iterator["MembraneNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def shape(self) -> str:
        """Label-free canonical bracket string of this subtree."""
        return "[" + "".join(sorted((c.shape() for c in self.children), key=_shape_key)) + "]"


def _shape_key(shape: str) -> str:
    return shape.translate(_SHAPE_ORDER)


@dataclass(frozen=True)
class MembraneStructure:
    root: MembraneNode

    def __post_init__(self):
        seen = set()
        for node in self.root.walk():
            if node.label < 1:
                raise MembraneError(f"membrane labels must be positive, got {node.label}")
            if node.label in seen:
                raise DuplicateLabel(f"label {node.label} used twice")
            seen.add(node.label)

    @property
    def skin(self) -> int:
        return self.root.label

    @cached_property
    def _parents(self) -> dict[int, int | None]:
        parents: dict[int, int | None] = {self.root.label: None}
        for node in self.root.walk():
            for child in node.children:
                parents[child.label] = node.label
        return parents

    @cached_property
    def _nodes(self) -> dict[int, MembraneNode]:
        return {node.label: node for node in self.root.walk()}

    @property
    def labels(self) -> list[int]:
        """Labels in preorder."""
        return [node.label for node in self.root.walk()]

    def __contains__(self, label: object) -> bool:
        return label in self._parents

    def parent(self, label: int) -> int | None:
        if label not in self._parents:
            raise UnknownLabel(f"no membrane labelled {label}")
        return self._parents[label]

    def children(self, label: int) -> tuple[int, ...]:
        if label not in self._nodes:
            raise UnknownLabel(f"no membrane labelled {label}")
        return tuple(c.label for c in self._nodes[label].children)

    def depth(self, label: int) -> int:
        d = 0
        while (label := self.parent(label)) is not None:
            d += 1
        return d

    def __str__(self) -> str:
        return canonical_text(self)


def parse_membrane(text: str) -> MembraneStructure:
    """Parse a bracket string into a :class:`MembraneStructure`."""
    # (open label | None, close label | None, child indices) per membrane, preorder
    opened: list[list] = []
    stack: list[int] = []
    top: list[int] = []
    i, n = 0, len(text)

    def read_label() -> int | None:
        nonlocal i
        j = i
        while j < n and text[j].isdigit():
            j += 1
        if j == i:
            return None
        value = int(text[i:j])
        i = j
        return value

    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == "[":
            i += 1
            idx = len(opened)
            opened.append([read_label(), None, []])
            if stack:
                opened[stack[-1]][2].append(idx)
            else:
                if top:
                    raise UnbalancedBrackets(f"column {i}: a membrane structure has exactly one outermost pair")
                top.append(idx)
            stack.append(idx)
        elif ch == "]":
            col = i + 1
            i += 1
            if not stack:
                raise UnbalancedBrackets(f"column {col}: ']' without matching '['")
            idx = stack.pop()
            close = read_label()
            entry = opened[idx]
            if close is not None:
                if entry[0] is not None and entry[0] != close:
                    raise MismatchedLabelPair(f"column {col}: opened as {entry[0]}, closed as {close}")
                entry[1] = close
        else:
            raise MembraneError(f"column {i + 1}: unexpected character {ch!r}")
    if stack:
        raise UnbalancedBrackets(f"{len(stack)} unclosed '['")
    if not opened:
        raise EmptyInput("membrane structure needs an outermost pair of brackets")

    labels: list[int | None] = [o[0] if o[0] is not None else o[1] for o in opened]
    used: set[int] = set()
    for lab in labels:
        if lab is None:
            continue
        if lab in used:
            raise DuplicateLabel(f"label {lab} used twice")
        if lab < 1:
            raise MembraneError("membrane labels must be positive")
        used.add(lab)
    fresh = 1
    for k, lab in enumerate(labels):
        if lab is None:
            while fresh in used:
                fresh += 1
            labels[k] = fresh
            used.add(fresh)

    def build(idx: int) -> MembraneNode:
        return MembraneNode(labels[idx], tuple(build(c) for c in opened[idx][2]))

    return MembraneStructure(build(0))


def _canonical_node(node: MembraneNode) -> tuple[str, str]:
    """Return (shape, labelled text) with children in canonical order."""
    parts = sorted((_canonical_node(c) + (c.label,) for c in node.children),
                   key=lambda p: (_shape_key(p[0]), p[2]))
    shape = "[" + "".join(p[0] for p in parts) + "]"
    text = f"[{node.label} " + "".join(p[1] + " " for p in parts) + f"]{node.label}"
    return shape, text


def canonical_text(ms: MembraneStructure) -> str:
    """Deterministic labelled representative of the structure's equivalence class."""
    return _canonical_node(ms.root)[1]


def canonical_shape(ms: MembraneStructure) -> str:
    return _canonical_node(ms.root)[0]


def structurally_equivalent(a: MembraneStructure, b: MembraneStructure) -> bool:
    """True when *a* and *b* are the same unordered tree, ignoring labels."""
    return canonical_shape(a) == canonical_shape(b)


def degree(ms: MembraneStructure) -> int:
    return sum(1 for _ in ms.root.walk())


def dissolve_membrane(ms: MembraneStructure, label: int) -> MembraneStructure:
    """Remove membrane *label*, handing its children to its parent."""
    if label == ms.skin:
        raise SkinDissolution("the skin membrane cannot be dissolved")
    if label not in ms:
        raise UnknownLabel(f"no membrane labelled {label}")

    def rebuild(node: MembraneNode) -> MembraneNode:
        kids: list[MembraneNode] = []
        for child in node.children:
            if child.label == label:
                kids.extend(rebuild(g) for g in child.children)
            else:
                kids.append(rebuild(child))
        return MembraneNode(node.label, tuple(kids))

    return MembraneStructure(rebuild(ms.root))
