"""Exception hierarchy shared by every module."""


class EtchVMError(Exception):
    """Base class for all errors raised by etchvm."""


class DataError(EtchVMError, ValueError):
    """Malformed input data: bad CSV, out-of-range values, bad shapes."""


class NumericalError(EtchVMError, ArithmeticError):
    """Non-finite values or divergence during a numerical procedure."""


class SingularityError(NumericalError):
    """Least-squares design matrix is rank deficient."""


class CalibrationError(NumericalError):
    """A synthetic oracle fit violates its physical constraints."""
