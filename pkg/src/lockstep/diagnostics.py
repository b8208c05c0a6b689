"""Source positions and diagnostics shared by the parser, validator and rewriter."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Pos:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    pos: Pos | None = None
    filename: str | None = None

    def __str__(self) -> str:
        name = self.filename or "<input>"
        where = str(self.pos) if self.pos is not None else "?:?"
        return f"{name}:{where}: {self.severity}: {self.message}"


def error(message: str, pos: Pos | None = None, filename: str | None = None) -> Diagnostic:
    return Diagnostic("error", message, pos, filename)


class ParseError(Exception):
    """Raised when source text cannot be turned into an AST."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class NotStructured(Exception):
    """Raised when the rewriter meets a protocol outside the supported shape."""

    def __init__(self, stage: str, message: str, pos: Pos | None = None):
        self.stage = stage
        self.pos = pos
        super().__init__(f"{stage}: {message}" + (f" (at {pos})" if pos else ""))


class BudgetExceeded(Exception):
    """Raised when a bounded enumeration outgrows its configured budget."""
