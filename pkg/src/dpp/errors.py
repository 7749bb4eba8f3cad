"""Exception hierarchy shared by every engine."""


class DPPError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DPPError, ValueError):
    """Malformed input: wrong dimensions, non-finite values, bad probabilities."""


class DomainError(DPPError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(DPPError, ArithmeticError):
    """Non-finite values produced during a computation.

    ``slot`` and ``node`` are filled in by the engine loops when known, and
    ``iterate`` carries the offending point for inner-solver failures.
    """

    def __init__(self, message, *, slot=None, node=None, iterate=None):
        super().__init__(message)
        self.slot = slot
        self.node = node
        self.iterate = iterate

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.node is not None:
            where.append(f"node {self.node}")
        if self.slot is not None:
            where.append(f"slot {self.slot}")
        return f"{msg} ({', '.join(where)})" if where else msg


class ProtocolError(DPPError):
    """A synchronous round was missing a message it needs."""


class OracleError(DPPError):
    """The brute-force oracle refused or could not produce a result."""
