"""Exception types shared by the solvers and the command line."""


class InvalidParameter(ValueError):
    """A physical or numerical parameter violates its constraint."""


class DomainError(ValueError):
    """An argument lies outside the region where a quantity is defined."""


class NumericalFailure(RuntimeError):
    """A solver could not produce a trustworthy answer.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (residual histories, iteration counts, offending indices).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
