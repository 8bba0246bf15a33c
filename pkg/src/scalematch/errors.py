"""Exception hierarchy shared by all scalematch modules."""


class ScaleMatchError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ScaleMatchError):
    pass


class SchemaError(ScaleMatchError):
    pass


class DanglingReference(ScaleMatchError):
    pass


class ScoreRangeError(ScaleMatchError):
    pass


class InsufficientData(ScaleMatchError):
    pass


class EmptyInput(ScaleMatchError):
    pass


class EmptySource(ScaleMatchError):
    pass


class MissingImageFile(ScaleMatchError):
    pass


class PlanCoverageError(ScaleMatchError):
    pass


class InvalidOverlap(ScaleMatchError):
    pass


class UnknownTile(ScaleMatchError):
    pass


class ImageIdMismatch(ScaleMatchError):
    pass


class InfeasiblePlacement(ScaleMatchError):
    pass


class DegenerateSupport(UserWarning):
    """Warning: every middle-bin size is equal, so the histogram collapses to 3 bins."""
