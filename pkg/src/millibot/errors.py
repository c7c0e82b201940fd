"""Exception types raised across the package."""


class MillibotError(Exception):
    """Base class for all package errors."""


class SingularityError(MillibotError, ValueError):
    """Field query too close to a coil's source point."""


class CalibrationError(MillibotError):
    pass


class GeometryError(MillibotError, ValueError):
    pass


class ParseError(MillibotError, ValueError):
    """Malformed input file; message names the offending line."""


class GridError(MillibotError, ValueError):
    """Input coordinates do not form a uniform rectilinear grid."""


class DomainError(MillibotError, ValueError):
    pass


class EmptyFeasibleError(MillibotError):
    """No pixel satisfies the clearance constraint."""


class NoPathError(MillibotError):
    pass


class SolveError(MillibotError):
    pass


class EmptySeriesError(MillibotError, ValueError):
    pass


class ConfigError(MillibotError, ValueError):
    pass
