"""Exception hierarchy shared by all engines.

Every error carries a short machine-readable ``code`` so the CLI and the
validation layer can report failures uniformly.
"""

from __future__ import annotations


class AgcError(Exception):
    code = "agc-error"


# membrane structures

class MembraneError(AgcError):
    code = "membrane"


class UnbalancedBrackets(MembraneError):
    code = "unbalanced-brackets"


class EmptyInput(MembraneError):
    code = "empty-input"


class DuplicateLabel(MembraneError):
    code = "duplicate-label"


class MismatchedLabelPair(MembraneError):
    code = "mismatched-label-pair"


class SkinDissolution(MembraneError):
    code = "skin-dissolution"


class UnknownLabel(MembraneError):
    code = "unknown-label"


# multisets

class InsufficientObjects(AgcError):
    code = "insufficient-objects"


class CountOverflow(AgcError):
    code = "count-overflow"


# classic engine

class AlreadyHalted(AgcError):
    code = "already-halted"


class OutputRegionDissolved(AgcError):
    code = "output-region-dissolved"


class InvalidCatalystDeclaration(AgcError):
    code = "invalid-catalyst-declaration"


# molecules and reactions

class MoleculeTooLarge(AgcError):
    code = "molecule-too-large"


class IndexOutOfRange(AgcError):
    code = "index-out-of-range"


class NonFiniteWeight(AgcError):
    code = "non-finite-weight"


class ArityMismatch(AgcError):
    code = "arity-mismatch"


class UnboundVariable(AgcError):
    code = "unbound-variable"


class InvalidProduct(AgcError):
    code = "invalid-product"

    def __init__(self, rule: str, violations: list[str]):
        self.rule = rule
        self.violations = violations
        super().__init__(f"rule {rule!r} produced an invalid molecule: {'; '.join(violations)}")


# population engines

class EmptyPopulation(AgcError):
    code = "empty-population"


class AllRegionsEmpty(AgcError):
    code = "all-regions-empty"


# analysis and persistence

class ProbeBudgetExceeded(AgcError):
    code = "probe-budget-exceeded"


class CorruptTrace(AgcError):
    code = "corrupt-trace"


class IoFailure(AgcError):
    code = "io-failure"


class ParseError(AgcError):
    """Syntax error with a 1-based source location."""

    code = "parse-error"

    def __init__(self, message: str, line: int = 1, col: int = 1, code: str | None = None):
        self.message = message
        self.line = line
        self.col = col
        if code is not None:
            self.code = code
        super().__init__(f"{line}:{col}: {message}")


class Diagnostic:
    __slots__ = ("code", "message", "line", "col")

    def __init__(self, code: str, message: str, line: int = 0, col: int = 0):
        self.code = code
        self.message = message
        self.line = line
        self.col = col

    def __repr__(self) -> str:
        return f"Diagnostic({self.code!r}, {self.message!r}, {self.line}, {self.col})"

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: [{self.code}] {self.message}"


class ValidationErrors(AgcError):
    code = "validation"

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))
