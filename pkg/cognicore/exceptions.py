"""Errors raised by Cognicore services.

Every error a user can trigger derives from ``CognicoreError``; the command
line maps it to exit code 1 and anything else to exit code 2.
"""
from __future__ import annotations

from typing import Any, Optional


class CognicoreError(Exception):
    """Base class for user-facing errors."""

    def __init__(self, message: str, ident: Any = None) -> None:
        super().__init__(message)
        self.ident = ident


class ParseError(CognicoreError):
    """Input could not be parsed."""


class IoError(CognicoreError):
    """File could not be read or written."""


class FormatError(CognicoreError):
    """A store file line is malformed."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}", ident=line)
        self.line = line


class ConfigError(CognicoreError):
    """Configuration value out of range."""


class SchemaError(CognicoreError):
    """Schema validation failed; ``findings`` holds every violation."""

    def __init__(
        self, message: str, ident: Any = None, findings: Optional[list] = None
    ) -> None:
        super().__init__(message, ident)
        self.findings = list(findings or [])


class DuplicateId(SchemaError):
    pass


class DanglingReference(SchemaError):
    pass


class InvalidDefinition(SchemaError):
    pass


class EmptyInput(CognicoreError):
    pass


class UnknownCategory(CognicoreError):
    pass


class UnknownClassifier(CognicoreError):
    pass


class UnknownObjectType(CognicoreError):
    pass


class UnknownObject(CognicoreError):
    pass


class SchemaViolation(CognicoreError):
    """Record does not conform to its object type."""


class HeaderMismatch(CognicoreError):
    pass


class OverlappingClassifiers(CognicoreError):
    pass


class DegenerateTarget(CognicoreError):
    """Target classifier has fewer than two observed categories."""


class NotChainable(CognicoreError):
    pass


class PremiseMismatch(CognicoreError):
    pass


class ConclusionMismatch(CognicoreError):
    pass


class NonAtomicPremise(CognicoreError):
    pass


class TargetAssigned(CognicoreError):
    """Query already assigns the prediction target."""


class InconsistentStart(CognicoreError):
    pass


class NonConvergence(CognicoreError):
    """Closure still changing after the iteration cap; carries the last state."""

    def __init__(self, message: str, state: Any) -> None:
        super().__init__(message)
        self.state = state


class EmptyContext(CognicoreError):
    pass


class UnknownInvariant(CognicoreError):
    pass


class NoSupportingRules(CognicoreError):
    pass


class InvalidDeadline(CognicoreError):
    pass


class AlreadyClosed(CognicoreError):
    pass


class UnknownExpectation(CognicoreError):
    pass


class UnknownProcess(CognicoreError):
    pass


class TypeMismatch(CognicoreError):
    pass
