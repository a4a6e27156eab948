"""Pseudo-differential calculus, normal-form reduction and unitary
propagation for dispersive equations on the 1-D torus."""

from .errors import (
    ContractError,
    GridMismatchError,
    HypothesisError,
    NumericalError,
    ReductionStallError,
    TorusnfError,
)
from .grid import GridFunction
from .symbols import Symbol
from .calculus import OperatorMatrix

__all__ = [
    "GridFunction",
    "Symbol",
    "OperatorMatrix",
    "TorusnfError",
    "HypothesisError",
    "NumericalError",
    "ContractError",
    "ReductionStallError",
    "GridMismatchError",
]

__version__ = "0.1.0"
