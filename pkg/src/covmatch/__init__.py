"""Synthetic-data augmentation laboratory for high-dimensional linear regression.

Deterministic-equivalent risk formulas for the min-norm interpolator trained on
a mix of real and synthetic samples, Monte Carlo validation of those formulas,
and greedy covariance-matching selection of synthetic feature vectors.
"""

from covmatch.errors import (
    CovmatchError,
    DataError,
    NumericalError,
    ParameterError,
    PropertyViolation,
)

__version__ = "0.1.0"

__all__ = [
    "CovmatchError",
    "DataError",
    "NumericalError",
    "ParameterError",
    "PropertyViolation",
]
