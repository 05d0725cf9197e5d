"""Shared error types.

Every error carries a short machine-readable ``code`` so the HTTP layer and
the CLI can map failures onto structured responses without string matching.
"""

from __future__ import annotations


class StanceFactsError(Exception):
    """Base class for all package errors."""

    code = "ERROR"

    def __init__(self, message: str, *, code: str | None = None, detail=None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.detail = detail

    @property
    def message(self) -> str:
        return str(self)


class IngestError(StanceFactsError):
    """Raised when a source table cannot be ingested (EMPTY_SOURCE, RAGGED_ROWS, ...)."""


class ExecutionFailure(StanceFactsError):
    """Raised when a validated query fails at execution time (type mismatch)."""

    code = "EXECUTION_FAILURE"


class FactParseError(StanceFactsError):
    """Raised when an LLM-proposed fact does not have the documented shape."""


class FactComputeError(StanceFactsError):
    """Raised when a fact cannot be computed over its sub-table (EMPTY_SUBSPACE, DEGENERATE)."""


class EmbeddingError(StanceFactsError):
    """Embedding provider failures (EMPTY_TEXT, PROVIDER_UNAVAILABLE, EMPTY_CATALOG)."""


class LlmError(StanceFactsError):
    """LLM gateway failures (LLM_UNAVAILABLE, MALFORMED_RESPONSE, EMPTY_RESPONSE, REPLAY_MISS)."""


class TreeError(StanceFactsError):
    """Retrieval tree failures (NODE_BUSY, UNKNOWN_NODE, CORRUPT_BLOB, EMPTY_STATEMENT)."""
