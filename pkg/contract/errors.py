class ContractError(Exception):
    """Base class of every failure raised by the library."""


class ValidationError(ContractError, ValueError):
    """
    An instance document or object violates one or more invariants.

    :param problems: Every violated invariant, one message each.
    """

    def __init__(self, problems: list[str]):
        self.problems: list[str] = list(problems)
        super().__init__("; ".join(self.problems) or "invalid instance")


class CapExceededError(ContractError, ValueError):
    """An enumeration would exceed its configured cap."""


class SolverRefusal(ContractError):
    """
    A solver precondition does not hold (e.g. FOSD fails).

    :param message: Human readable reason.
    :param witness: Optional object documenting the failure.
    """

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class NumericalError(ContractError, ArithmeticError):
    """A numerical method failed to produce a trustworthy answer."""


class IndeterminateError(NumericalError):
    """
    An iterative method ran out of budget.

    :param message: Human readable reason.
    :param best: Best-so-far payload of the method.
    """

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)
