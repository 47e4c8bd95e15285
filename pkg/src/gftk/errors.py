"""Exception types raised across the toolkit."""


class GftkError(Exception):
    """Base class for every toolkit failure the CLI maps to exit status 1."""


class GraphError(GftkError, ValueError):
    pass


class FormatError(GftkError, ValueError):
    """Malformed input file."""


class NotPositiveDefiniteError(GftkError, ValueError):
    pass


class ConvergenceError(GftkError, RuntimeError):
    pass


class DimensionError(GftkError, ValueError):
    pass
