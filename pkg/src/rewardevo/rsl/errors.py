"""Structured error types for the reward scripting language.

Every failure mode of parse/validate/evaluate surfaces as one of these; no
input may escape as a bare Python exception.
"""

from __future__ import annotations


class RslError(Exception):
    """Base class for all reward-language failures."""


class RslParseError(RslError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class RslValidationError(RslError):
    """Program references fields outside the task schema."""

    def __init__(self, unknown_fields: set[str]):
        fields = ", ".join(sorted(unknown_fields))
        super().__init__(f"unknown context fields: {fields}")
        self.unknown_fields = frozenset(unknown_fields)


class RslRuntimeError(RslError):
    """Base class for evaluation-time failures."""


class RslBudgetError(RslRuntimeError):
    """Interpreter step budget exhausted."""


class RslNumericError(RslRuntimeError):
    """An intermediate value became non-finite (or a domain error)."""


class RslMissingKeyError(RslRuntimeError):
    """Direct read of a context field absent at runtime."""


class RslTypeError(RslRuntimeError):
    """Operand or argument of the wrong kind."""


class RslValueError(RslRuntimeError):
    """Bad value: index out of range, bad builtin argument, oversized result."""
