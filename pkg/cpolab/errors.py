from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class CpolabError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""
    exit_code = 1


class ValidationError(CpolabError):
    exit_code = 2

    def __init__(self, diagnostics: Iterable[Diagnostic] | Diagnostic):
        if isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics: List[Diagnostic] = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @property
    def codes(self) -> List[str]:
        return [d.code for d in self.diagnostics]


class ParseError(ValidationError):
    """Malformed numeric input; the message names the offending line."""

    def __init__(self, path: str, line_no: int, text: str):
        self.path = path
        self.line_no = line_no
        super().__init__(Diagnostic("parse_error", f"{path}:{line_no}: cannot parse row {text!r}"))


class NumericError(CpolabError):
    exit_code = 3


class IntegrationError(NumericError):
    def __init__(self, message: str, *, z: float | None = None):
        self.z = z
        if z is not None:
            message = f"{message} (z = {z:.4g} cm)"
        super().__init__(message)


class FloquetSolveError(NumericError):
    def __init__(self, message: str, *, condition: float | None = None, parameters: dict | None = None):
        self.condition = condition
        self.parameters = dict(parameters or {})
        extra = []
        if condition is not None:
            extra.append(f"cond ~ {condition:.3e}")
        if self.parameters:
            extra.append(", ".join(f"{k}={v:.6g}" for k, v in sorted(self.parameters.items())))
        if extra:
            message = f"{message} [{'; '.join(extra)}]"
        super().__init__(message)


class QuadratureError(NumericError):
    def __init__(self, message: str, *, relative_change: float):
        self.relative_change = relative_change
        super().__init__(f"{message} (node doubling changed result by {relative_change:.3%})")


class FitError(NumericError):
    pass


class ConfigIOError(CpolabError):
    exit_code = 4

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


@dataclass
class DiagnosticList:
    """Collects diagnostics and raises them together."""
    items: List[Diagnostic] = field(default_factory=list)

    def add(self, code: str, message: str) -> None:
        self.items.append(Diagnostic(code, message))

    def raise_if_any(self) -> None:
        if self.items:
            raise ValidationError(self.items)
