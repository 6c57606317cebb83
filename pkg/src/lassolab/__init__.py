"""Lasso oracle inequalities: design geometry, entropy bounds and Monte Carlo checks."""
from .design import DesignMatrix, generate, read_csv, write_csv
from .errors import (
    ApproximationWarning,
    CapacityError,
    DegenerateError,
    DimensionError,
    DomainError,
    InputError,
    LassoLabError,
    NumericError,
    ParameterError,
)
from .geometry import SupportPartition, compatibility, l1_eigenvalue, min_eigenvalue, restricted_eigenvalue
from .lasso import fit

__version__ = "0.1.0"

__all__ = [
    "ApproximationWarning",
    "CapacityError",
    "DegenerateError",
    "DesignMatrix",
    "DimensionError",
    "DomainError",
    "InputError",
    "LassoLabError",
    "NumericError",
    "ParameterError",
    "SupportPartition",
    "compatibility",
    "fit",
    "generate",
    "l1_eigenvalue",
    "min_eigenvalue",
    "read_csv",
    "restricted_eigenvalue",
    "write_csv",
]
