"""Exception hierarchy shared by all projloss modules."""


class ProjLossError(Exception):
    """Base class for every error raised by projloss."""


class DomainError(ProjLossError, ValueError):
    """An argument lies outside the domain of the generating function."""


class DimensionMismatch(ProjLossError, ValueError):
    pass


class TooManyVertices(ProjLossError):
    pass


class Unbounded(ProjLossError, ValueError):
    pass


class InfeasibleBounds(ProjLossError, ValueError):
    pass


class TargetOutsideSet(ProjLossError, ValueError):
    pass


class InvalidLabel(ProjLossError, ValueError):
    pass


class UnknownLoss(ProjLossError, KeyError):
    pass


class InvalidDataset(ProjLossError, ValueError):
    pass


class NotConverged(ProjLossError):
    """An iterative solver hit its iteration cap.

    The best iterate and its residual are attached so callers can decide
    whether the answer is still usable.
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class ParseError(ProjLossError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IndexOutOfRange(ParseError):
    pass


class NotAPermutation(ParseError):
    pass


class FormatError(ProjLossError, ValueError):
    pass


class VersionError(FormatError):
    pass
