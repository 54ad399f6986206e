"""Exception hierarchy shared by every module."""


class GridfuseError(Exception):
    """Base class for all library errors."""


class InvalidArgument(GridfuseError, ValueError):
    pass


class NoDataError(GridfuseError, ValueError):
    pass


class NumericalFailure(GridfuseError, ArithmeticError):
    pass


class TrainingDiverged(NumericalFailure):
    pass


class InfeasibleOperatingPoint(NumericalFailure):
    """Squared voltage magnitude fell to zero or below somewhere on the feeder."""


class FeederValidationError(InvalidArgument):
    pass
