"""Exception types shared across the package."""

from __future__ import annotations


class EvigraphError(Exception):
    """Base class for all package errors."""


# --- graph ---------------------------------------------------------------


class DuplicateId(EvigraphError):
    pass


class DuplicateName(EvigraphError):
    pass


class IllegalLabelPair(EvigraphError):
    """(keyword type, label) combination not allowed by the relation map."""


class EmptyTopic(EvigraphError):
    pass


class AuditError(EvigraphError):
    """Raised when an operation requires a clean graph and audit found violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"{len(self.violations)} audit violation(s)")


class CorruptFile(EvigraphError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class VersionMismatch(EvigraphError):
    pass


# --- ingestion -----------------------------------------------------------


class ConfigError(EvigraphError):
    pass


class EmptyDocument(EvigraphError):
    pass


class NoKeywords(EvigraphError):
    pass


# --- backends ------------------------------------------------------------


class BackendError(EvigraphError):
    """Base class for model-access failures."""

    retryable = False


class Timeout(BackendError):
    retryable = True


class RateLimited(BackendError):
    retryable = True


class BadResponse(BackendError):
    retryable = False


class UnparseableVerdict(BackendError):
    retryable = False


# --- retrieval -----------------------------------------------------------


class IsolatedSeeds(EvigraphError):
    """No seed entity has any edge in the bipartite graph."""


class NoFeatures(EvigraphError):
    pass


class EmptyResult(EvigraphError):
    """Retrieval produced nothing; ``reason`` is machine readable."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


# --- evaluation ----------------------------------------------------------


class EmptyDataset(EvigraphError):
    pass


class DegenerateTally(EvigraphError):
    pass


class LengthMismatch(EvigraphError):
    pass
