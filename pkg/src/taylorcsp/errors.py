"""Exception hierarchy shared by every stage of the solver."""


class TaylorCSPError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(TaylorCSPError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BoundExceededError(TaylorCSPError):
    """A desk-scale bound was exceeded; ``size`` is the offending quantity."""

    def __init__(self, what, size, bound):
        self.what = what
        self.size = size
        self.bound = bound
        super().__init__(f"{what}: size {size} exceeds bound {bound}")


class ContractError(TaylorCSPError):
    """A precondition or structural invariant was violated by the caller."""


class SignatureMismatchError(ContractError):
    pass


class PremiseViolation(TaylorCSPError):
    """A claim the algorithm relies on did not hold on this input.

    The pipeline reports these as ``Unknown`` rather than guessing.
    """

    def __init__(self, message, diagnostic=None):
        self.diagnostic = diagnostic or {}
        super().__init__(message)


class UnknownOutcome(TaylorCSPError):
    """A bounded search could not decide its question."""
