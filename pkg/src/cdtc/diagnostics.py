"""Positioned diagnostics shared by the parser and the validator."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional

_CODE_RE = re.compile(r"^[EW]\d{3}$")


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SourceSpan:
    """1-based line/column position plus character length."""

    line: int
    column: int
    length: int = 0

    def __post_init__(self):
        if self.line < 1 or self.column < 1 or self.length < 0:
            raise ValueError(f"invalid span {self.line}:{self.column}+{self.length}")


@dataclass(frozen=True)
class Diagnostic:
    """One rule firing; ``span`` is absent for whole-file diagnostics."""

    severity: Severity
    code: str
    message: str
    span: Optional[SourceSpan] = None

    def __post_init__(self):
        if not _CODE_RE.match(self.code):
            raise ValueError(f"malformed diagnostic code {self.code!r}")
        if not self.message:
            raise ValueError("diagnostic message must not be empty")
        expected = Severity.ERROR if self.code[0] == "E" else Severity.WARNING
        if self.severity is not expected:
            raise ValueError(f"severity {self.severity} does not match code {self.code}")

    def render(self, filename: str = "<input>") -> str:
        """One-line human form, e.g. ``file.cdtc:3:9: error[E001]: ...``."""
        where = filename
        if self.span is not None:
            where = f"{filename}:{self.span.line}:{self.span.column}"
        return f"{where}: {self.severity}[{self.code}]: {self.message}"


def error(code: str, message: str, span: Optional[SourceSpan] = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, span)


def warning(code: str, message: str, span: Optional[SourceSpan] = None) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, span)


def has_errors(diagnostics) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)
