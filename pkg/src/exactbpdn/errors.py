"""Exception hierarchy shared by all solver modules."""


class BPDNError(Exception):
    """Base class for errors raised by :mod:`exactbpdn`."""


class InvalidArgumentError(BPDNError, ValueError):
    pass


class RankDeficientError(BPDNError):
    pass


class DomainError(BPDNError, ValueError):
    """A dual point lies outside the feasible polyhedron."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class NonConvergenceError(BPDNError):
    """Iteration cap reached. ``best`` holds the last iterate, ``report`` a summary."""

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class InfeasibleError(BPDNError):
    """The basis pursuit constraint ``A x = b`` has no solution."""


class PathStallError(BPDNError):
    pass


class InternalConsistencyError(BPDNError):
    pass


class ParseError(BPDNError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
