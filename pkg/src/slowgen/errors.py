"""Exception types shared across the toolkit."""


class SlowgenError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SlowgenError, ValueError):
    """A hyperparameter or configuration value is out of its legal range."""


class DegenerateDistributionError(SlowgenError, ValueError):
    """A probability vector that must be normalizable sums to zero."""


class MalformedResponseError(SlowgenError):
    """A victim response violates the wire contract.

    ``field`` names the offending response field so protocol bugs are
    attributable from logs alone.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"malformed victim response: field '{field}': {message}")
        self.field = field


class ProtocolError(SlowgenError):
    """The server rejected a request as invalid (HTTP 400/422); not retriable."""


class TransportError(SlowgenError):
    """Network-level failure talking to a victim endpoint, retries exhausted."""


class AttackError(SlowgenError):
    """The optimization loop aborted mid-run.

    Carries the failing iteration index and whatever per-iteration trace was
    accumulated before the failure.
    """

    def __init__(self, iteration: int, cause: str, partial_trace: list | None = None):
        super().__init__(f"attack aborted at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
        self.partial_trace = partial_trace if partial_trace is not None else []
