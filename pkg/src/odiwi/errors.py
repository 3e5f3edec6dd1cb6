"""Exception hierarchy for the odiwi package."""


class OdiwiError(Exception):
    """Base class for all package errors."""


class RankDeficient(OdiwiError):
    """Design/covariate matrix is not full column rank."""


class Separation(OdiwiError):
    """Logistic likelihood is unbounded (perfect or quasi separation)."""


class NoConvergence(OdiwiError):
    """Iterative procedure exhausted its iteration budget."""


class EmptyDesign(OdiwiError):
    """Design has no support points."""


class SingularInformation(OdiwiError):
    """Information matrix is singular and cannot be inverted."""


class DegenerateRange(OdiwiError):
    """All candidate exposures are identical; no grid can be built."""


class EmptyAfterPrune(OdiwiError):
    """Every design weight fell below the pruning threshold."""


class DegenerateSample(OdiwiError):
    """Sample has zero spread in some dimension; KDE is undefined."""


class AllZeroWeights(OdiwiError):
    """Target density places no mass on the source support."""


class DimensionMismatch(OdiwiError):
    """Input dimensions do not agree with the fitted object."""


class SchemaError(OdiwiError):
    """Input file does not match the expected column schema."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class MissingValue(SchemaError):
    """A required cell is empty or non-numeric."""


class TooManyFailures(OdiwiError):
    """More than the tolerated fraction of bootstrap replicates failed."""
