"""Exception hierarchy shared by all modules."""


class LassoLabError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class DimensionError(LassoLabError, ValueError):
    pass


class ParameterError(LassoLabError, ValueError):
    pass


class DomainError(LassoLabError, ValueError):
    pass


class InputError(LassoLabError, ValueError):
    pass


class DegenerateError(LassoLabError, ValueError):
    pass


class CapacityError(LassoLabError):
    pass


class NumericError(LassoLabError, ArithmeticError):
    pass


class ApproximationWarning(UserWarning):
    """Emitted when an exact routine falls back to a heuristic."""
