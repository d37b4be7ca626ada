"""Exception hierarchy shared by all nbfem modules."""


class NbfemError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(NbfemError):
    """Invalid run configuration (CLI exit code 2)."""


class InadmissibleBand(ConfigError):
    """Band half-width violates d * curvature_bound <= 1/2."""


class ResourceLimit(NbfemError):
    """Estimated work or memory exceeds a configured cap (CLI exit code 3)."""


class OutsideBand(NbfemError):
    """Point lies outside the region where the signed distance is smooth."""


class EmptyBand(NbfemError):
    """No background cell meets the discrete band."""


class DegenerateCut(NbfemError):
    """Cut polytope collapsed to zero measure after tie-breaking."""


class UnsupportedDegree(NbfemError):
    pass


class NoIntersection(NbfemError):
    """The zero level set of the discrete distance misses the cell."""


class Unsupported(NbfemError):
    """Requested (dimension, order) combination is not implemented."""


class PointOutsideCell(NbfemError):
    pass


class DimensionMismatch(NbfemError):
    pass


class BreakdownNonSPD(NbfemError):
    """CG met a search direction with non-positive curvature."""


class NotConverged(NbfemError):
    """CG hit max_iter; carries the best iterate and the solve statistics."""

    def __init__(self, message, x=None, stats=None):
        super().__init__(message)
        self.x = x
        self.stats = stats


class NonPositiveError(NbfemError):
    pass


class NoTraceCells(NbfemError):
    pass


class IoError(NbfemError):
    """Output file could not be written."""
