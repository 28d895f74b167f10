"""Exact normal forms and affine symmetries of Hessian rank one hypersurfaces."""

__version__ = "0.1.0"

from .series import (
    AffineTransform,
    Coeff,
    TruncatedSeries,
    coefficient_pick,
    make_series,
    multiply,
    partial_derivative,
    project,
    substitute,
)

__all__ = [
    "AffineTransform",
    "Coeff",
    "TruncatedSeries",
    "coefficient_pick",
    "make_series",
    "multiply",
    "partial_derivative",
    "project",
    "substitute",
]
