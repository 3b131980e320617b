"""Exception hierarchy.

Every error carries a class name the CLI prints verbatim, so keep names stable.
"""


class SpatialSLError(Exception):
    """Base class for all package errors."""


class DegenerateInput(SpatialSLError, ValueError):
    pass


class NonFinite(SpatialSLError, ValueError):
    pass


class SchemaMismatch(SpatialSLError, ValueError):
    pass


class DuplicateId(SpatialSLError, ValueError):
    pass


class ParseError(SpatialSLError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class AllColumnsDropped(SpatialSLError, ValueError):
    pass


class InsufficientDonors(SpatialSLError, ValueError):
    pass


class EmptySeries(SpatialSLError, ValueError):
    pass


class NoOverlap(SpatialSLError, ValueError):
    pass


class DegenerateDesign(SpatialSLError, ValueError):
    pass


class NotFitted(SpatialSLError, RuntimeError):
    pass


class TooFewRows(SpatialSLError, ValueError):
    pass


class ConstantColumn(SpatialSLError, ValueError):
    pass


class LearnerFailure(SpatialSLError, RuntimeError):
    """A base learner failed on a specific fold."""

    def __init__(self, learner, fold, cause):
        super().__init__(f"learner {learner!r} failed on fold {fold}: {cause}")
        self.learner = learner
        self.fold = fold
        self.cause = cause


class SingularConditioning(SpatialSLError, ArithmeticError):
    def __init__(self, site, message="non-positive conditional variance"):
        super().__init__(f"{message} at site {site}")
        self.site = site


class SingularNeighborhood(SpatialSLError, ArithmeticError):
    pass


class NotConverged(SpatialSLError, RuntimeError):
    pass


class RankDeficientDesign(SpatialSLError, ValueError):
    pass


class EmptyTestSet(SpatialSLError, ValueError):
    pass


class NotTreeEnsemble(SpatialSLError, TypeError):
    pass


class ConstantCovariate(SpatialSLError, ValueError):
    pass


class SizeTooLarge(SpatialSLError, ValueError):
    pass


class ConfigError(SpatialSLError, ValueError):
    pass
