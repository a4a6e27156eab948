"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: hypothesis violations exit 1,
numerical failures exit 2, contract/ledger violations exit 3.
"""


class TorusnfError(Exception):
    """Base class for all package errors."""


class HypothesisError(TorusnfError):
    """A structural hypothesis on the input data is violated
    (non-positive potential, missing order gap, non-self-adjoint operator)."""


class NumericalError(TorusnfError):
    """A numerical procedure failed (NaN, non-convergence, loss of unitarity)."""


class ContractError(TorusnfError):
    """An internal contract was violated (wrong flags, inconsistent shapes
    that indicate misuse rather than bad data)."""


class ReductionStallError(ContractError):
    """The order ledger of the descent stopped improving.

    Carries the per-step ledger so the caller can report it.
    """

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger if ledger is not None else []


class GridMismatchError(ContractError):
    """Operands live on grids of different size."""
