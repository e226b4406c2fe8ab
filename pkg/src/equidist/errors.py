"""Exception hierarchy shared by all modules."""


class EquidistError(Exception):
    """Base class for every error raised by the package."""


class ZeroVector(EquidistError, ValueError):
    pass


class DimensionMismatch(EquidistError, ValueError):
    pass


class PointAtInfinity(EquidistError, ValueError):
    pass


class DegenerateMap(EquidistError, ValueError):
    """The components of a map share a nontrivial common zero."""


class DegenerateImage(EquidistError, ArithmeticError):
    pass


class SolverFailure(EquidistError, RuntimeError):
    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{message} (path {list(path)})")
        self.path = path


class DegenerateFiber(SolverFailure):
    pass


class EliminationDegenerate(SolverFailure):
    pass


class TreeTooLarge(EquidistError, ValueError):
    pass


class ExceptionalStart(EquidistError, ValueError):
    pass


class GridOverflow(EquidistError, ValueError):
    pass


class NotC1(EquidistError, ValueError):
    pass


class ScheduleUnderflow(EquidistError, ArithmeticError):
    """A regularization scale fell below 1e-300; ``states`` holds the levels done so far."""

    def __init__(self, message, states=None):
        super().__init__(message)
        self.states = states or []


class AmbiguousCount(EquidistError, RuntimeError):
    def __init__(self, message, counts=None):
        super().__init__(message)
        self.counts = counts


class InsufficientSignal(EquidistError, RuntimeError):
    pass


class ConfigError(EquidistError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, message, path=()):
        loc = "/".join(str(p) for p in path) or "<root>"
        super().__init__(f"{loc}: {message}")
        self.path = tuple(path)
