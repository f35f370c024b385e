"""Exception hierarchy shared by all smgp modules."""


class SmgpError(Exception):
    """Base class for all smgp errors."""


class DataError(SmgpError, ValueError):
    """Invalid or unreadable input data.

    ``line`` is the 1-based file line number when the error comes from a CSV.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotPositiveDefiniteError(SmgpError, ArithmeticError):
    """Cholesky factorization failed at every jitter level."""


class NumericalError(SmgpError, ArithmeticError):
    pass


class EstimationError(SmgpError):
    pass


class SamplingError(SmgpError):
    pass


class TuningError(SmgpError):
    pass


class ArimaFitError(SmgpError):
    pass
