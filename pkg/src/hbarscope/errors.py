"""Exception hierarchy.

Every error raised by the package derives from :class:`HbarscopeError`. The
CLI maps the three families below onto exit codes (1 data, 2 config,
3 transport).
"""


class HbarscopeError(Exception):
    exit_code = 1


class DataError(HbarscopeError):
    exit_code = 1


class ConfigurationError(HbarscopeError):
    exit_code = 2


class TransportError(HbarscopeError):
    exit_code = 3


class AccountIdError(DataError, ValueError):
    def __init__(self, text, token):
        self.text = text
        self.token = token
        super().__init__(f"malformed account id {text!r}: bad token {token!r}")


class IntegrityError(DataError):
    """Transfer legs of a transaction do not sum to zero."""

    def __init__(self, consensus_timestamp, residual):
        self.consensus_timestamp = consensus_timestamp
        self.residual = residual
        super().__init__(
            f"transaction at {consensus_timestamp} does not balance: residual {residual}"
        )


class OrderingError(DataError):
    def __init__(self, previous, current):
        self.previous = previous
        self.current = current
        super().__init__(
            f"records out of consensus order: {current} follows {previous}"
        )


class UndefinedMetricError(DataError, ValueError):
    pass


class DegenerateSampleError(UndefinedMetricError):
    pass


class InsufficientDataError(UndefinedMetricError):
    pass


class SnapshotUnavailableError(DataError):
    def __init__(self, at, reason="no snapshot covers this timestamp"):
        self.at = at
        super().__init__(f"snapshot unavailable at {at}: {reason}")


class IngestionError(TransportError):
    """Raised when the retry budget is exhausted. Carries the resumable cursor."""

    def __init__(self, message, cursor=None):
        self.cursor = cursor
        super().__init__(message)
