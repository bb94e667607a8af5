"""
Exception hierarchy for the TRMS profiler
"""


class TrmsError(Exception):
    """Base class for every error raised by the profiler"""


class ConfigError(TrmsError):
    """Invalid configuration value"""


# ============================================================================
# TRACE ERRORS
# ============================================================================

class TraceError(TrmsError):
    """Malformed or inconsistent trace input"""


class MalformedLine(TraceError):

    def __init__(self, line_number: int, reason: str, source: str = "<trace>"):
        self.line_number = line_number
        self.reason = reason
        self.source = source
        super().__init__(f"{source}:{line_number}: {reason}")


class NonMonotonicTimestamp(TraceError):

    def __init__(self, line_number: int, previous: int, current: int, source: str = "<trace>"):
        self.line_number = line_number
        self.previous = previous
        self.current = current
        self.source = source
        super().__init__(
            f"{source}:{line_number}: timestamp {current} does not follow {previous}"
        )


class ReturnOnEmptyStack(TraceError):

    def __init__(self, tid: int):
        self.tid = tid
        super().__init__(f"return on thread {tid} with no pending routine")


class MalformedProfile(TraceError):
    """A profile CSV that cannot be read back into tuples"""

    def __init__(self, source, reason: str):
        self.source = str(source)
        self.reason = reason
        super().__init__(f"{self.source}: {reason}")


class ReplayError(TraceError):
    """A handler failed; carries the index of the offending merged event"""

    def __init__(self, event_index: int, event, cause: Exception):
        self.event_index = event_index
        self.event = event
        self.cause = cause
        super().__init__(f"event #{event_index} ({event}): {cause}")


# ============================================================================
# SHADOW STATE ERRORS
# ============================================================================

class ShadowError(TrmsError):
    """Shadow memory or timestamp counter failure"""


class CounterWidthExceeded(ShadowError):

    def __init__(self, value: int, width: int):
        self.value = value
        self.width = width
        super().__init__(f"timestamp {value} does not fit in {width} bits")


class RenumberInsufficient(ShadowError):

    def __init__(self, count: int, pending: int, width: int):
        self.count = count
        self.pending = pending
        self.width = width
        super().__init__(
            f"{pending} pending activations need count={count}, "
            f"too close to the {width}-bit limit even after renumbering"
        )


# ============================================================================
# REPORTING / CHECK ERRORS
# ============================================================================

class InsufficientPoints(TrmsError):

    def __init__(self, distinct: int, needed: int = 3):
        self.distinct = distinct
        self.needed = needed
        super().__init__(f"curve fitting needs {needed} distinct sizes, got {distinct}")


class CheckFailed(TrmsError):
    """A requested self-check did not pass"""


class InvariantViolation(CheckFailed):

    def __init__(self, event_index: int, tid: int, expected, actual):
        self.event_index = event_index
        self.tid = tid
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"after event #{event_index}, thread {tid}: "
            f"oracle pending sizes {expected} != shadow stack sums {actual}"
        )


class OracleMismatch(CheckFailed):

    def __init__(self, mismatches: list):
        self.mismatches = mismatches
        shown = "; ".join(str(m) for m in mismatches[:5])
        super().__init__(f"{len(mismatches)} tuple(s) differ from the naive oracle: {shown}")
