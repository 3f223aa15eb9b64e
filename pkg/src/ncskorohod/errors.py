"""Exception hierarchy."""


class SkorohodError(Exception):
    """Base class for all library errors."""


class NonConvergence(SkorohodError):
    """An inner iterative solve (closest point on a level set) stalled."""


class OutsideUniquenessRegion(SkorohodError):
    """Projection requested too far from the set for the nearest point to be unique."""


class InteriorPoint(SkorohodError):
    """A boundary-only query was made at a strictly interior point."""


class NoDirection(SkorohodError):
    """The domain kind has no registered shifted-interior-ball construction."""


class OutsideDomain(SkorohodError):
    """A point that must lie in the domain does not."""


class OutOfRange(SkorohodError, ValueError):
    """Argument outside the range of a monotone path functional."""


class ArgumentOutOfMuRange(OutOfRange):
    """delta and C are inconsistent with the driver: the inverse modulus is undefined."""


class StepCollapse(SkorohodError):
    """Step bisection exhausted without bringing the excursion under the safety radius."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StartOutsideDomain(SkorohodError):
    """Initial point is not in the domain."""


class GridMismatch(SkorohodError):
    """Two paths that must share a time grid do not."""


class PathFormatError(SkorohodError, ValueError):
    """Malformed path CSV."""


class ConfigError(SkorohodError, ValueError):
    """Problem-file error, positioned by key path (and line when known)."""

    def __init__(self, message, where=None):
        self.where = where
        self.message = message
        super().__init__(f"{where}: {message}" if where else message)
