"""Exception types shared across the engine."""

from __future__ import annotations


class CitegateError(Exception):
    """Base class for all engine errors."""


class RejectedInput(CitegateError):
    """Caller-supplied input failed a precondition (empty question, bad axis)."""


class InvalidTransition(CitegateError):
    """Attempted a state-machine edge that does not exist."""

    def __init__(self, state, event):
        self.state = state
        self.event = event
        super().__init__(f"no edge from {state.value!r} on event {event.value!r}")


class SchemaViolation(CitegateError):
    """A model reply failed its strict output schema (retryable)."""


class SchemaExhausted(CitegateError):
    """All retry attempts produced schema-violating replies."""

    def __init__(self, message: str, last_reply: str, usage=None):
        self.last_reply = last_reply
        self.usage = usage
        super().__init__(message)


class RenderError(CitegateError):
    """A prompt template placeholder was left unbound."""

    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(f"unbound placeholder: {placeholder!r}")


class EmbeddingFailure(CitegateError):
    """The embedding provider failed (retryable at the call site)."""


class IndexMismatch(CitegateError):
    """Vector dimension does not match the index."""


class UncitableSource(CitegateError):
    """A raw reference carries no usable identifier (doi/isbn/url)."""


class MarkerSyntaxError(CitegateError):
    """A citation marker in a draft is malformed."""

    def __init__(self, position: int, fragment: str):
        self.position = position
        self.fragment = fragment
        super().__init__(f"malformed citation marker at offset {position}: {fragment!r}")


class CrawlFailure(CitegateError):
    """Every source tier failed for a keyword tuple."""


class DocumentParseFailure(CitegateError):
    """The structured-text adapter could not parse a document."""


class NotFound(CitegateError):
    """A requested record does not exist."""


class UndefinedMetric(CitegateError):
    """A metric is undefined on the given input (e.g. empty set)."""


class StoreQueryError(CitegateError):
    """A store query referenced an unknown field or malformed value."""


class ConfigError(CitegateError):
    """Invalid or incomplete configuration."""


class RunAborted(CitegateError):
    """A question run died after exhausting provider retries."""

    def __init__(self, message: str, trace=None):
        self.trace = trace or []
        super().__init__(message)
