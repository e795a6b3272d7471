"""Exception types shared across the triage pipeline."""


class CryptoTriageError(Exception):
    """Base class for all package errors."""


class IngestError(CryptoTriageError):
    """Raised when CSV ingest cannot produce a usable graph."""


class UnknownNodeError(CryptoTriageError):
    """Raised when a wallet address does not exist in the graph."""


class SchemaMismatchError(CryptoTriageError):
    """Raised when a model checkpoint does not match the graph's feature schema."""


class TrainingDivergedError(CryptoTriageError):
    """Raised when training produces a non-finite loss or weights."""

    def __init__(self, message, epoch=None, last_good=None):
        super().__init__(message)
        self.epoch = epoch
        self.last_good = last_good


class InsufficientNeighborhoodError(CryptoTriageError):
    """Raised when an ego network is too small to support a kernel explanation."""

    def __init__(self, n_found, n_required):
        super().__init__(
            f"neighborhood has {n_found} nodes, need at least {n_required}"
        )
        self.n_found = n_found
        self.n_required = n_required


class NarrationError(CryptoTriageError):
    """Raised when the chat-completion backend fails permanently."""


class WorkflowError(CryptoTriageError):
    """Base class for case-workflow violations."""


class IllegalTransitionError(WorkflowError):
    """Raised on an attempt to move a case through a non-legal transition."""


class CaseNotFoundError(WorkflowError):
    """Raised when a case id does not exist in the store."""


class ConfigError(CryptoTriageError):
    """Raised for invalid or unknown run-configuration values."""
