"""Regularisation of discretised ill-posed problems from repeated white-noise measurements."""

from . import discretise, estimate, filters, linop, noise, problems, regularise
from .linop import DenseOperator

__version__ = "0.1.0"

__all__ = ["DenseOperator", "discretise", "estimate", "filters", "linop", "noise", "problems", "regularise"]
