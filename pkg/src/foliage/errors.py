"""Exception types shared across the package."""


class FoliageError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FoliageError):
    """Syntax or symbol error while parsing an expression.

    Carries the byte offset of the offending token in ``offset``.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class EvalDomainError(FoliageError):
    """Expression evaluated outside its mathematical domain.

    ``span`` is the (start, end) byte range of the offending subterm in the
    original source text, ``subterm`` its text.
    """

    def __init__(self, message, span=None, subterm=None):
        if subterm is not None:
            message = f"{message} in subterm '{subterm}'"
        super().__init__(message)
        self.span = span
        self.subterm = subterm


class MetricError(FoliageError):
    """Metric is not symmetric positive definite at an evaluation point."""


class DegenerateFrameError(FoliageError):
    """Declared frame fields fail to be linearly independent at a point."""


class DomainExitError(FoliageError):
    """An integrated curve left the scenario domain box.

    ``partial`` holds the trajectory integrated so far, when available.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class PreconditionError(FoliageError):
    """An operation's documented precondition was violated."""


class ConfigError(FoliageError):
    """Scenario configuration failed to parse or validate."""
