"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class IngestionError(EngineError):
    """A benchmark file is missing or malformed; message carries path/line context."""


class ConfigurationError(EngineError):
    """An illegal stage/scenario combination or invalid run configuration."""


class BackendError(EngineError):
    """LLM transport failed after retries; aborts the sample as Infrastructure."""


class FixtureError(BackendError):
    """A scripted backend ran out of responses or got an unknown request."""


class PlanParseError(EngineError):
    """A planning response contained neither operation lines nor the empty sentinel."""


class EmptyGenerationError(EngineError):
    """Code extraction produced nothing; routed into the regeneration loop."""


class AnswerParseError(EngineError):
    """Final program output could not be interpreted for the task kind."""


class InfrastructureError(EngineError):
    """Kernel spawn, protocol, or replay failure; aborts the sample immediately."""


class ProtocolError(InfrastructureError):
    """The kernel wire protocol was violated or desynchronized."""


class TableStatusError(EngineError):
    """The conventional dataframe is missing from the kernel namespace.

    Treated as a code error (the offending cell is regenerated), not as an
    infrastructure failure.
    """
