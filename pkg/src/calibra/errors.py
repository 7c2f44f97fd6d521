"""Exception types shared across the package."""


class CalibraError(Exception):
    pass


class DomainError(CalibraError, ValueError):
    """An argument lies outside the operation's domain."""


class FitError(CalibraError, ValueError):
    """A calibrator cannot be fitted on the given data (e.g. one class only)."""


class NumericError(CalibraError, ArithmeticError):
    """An iterative numeric procedure failed to converge."""


class ConfigError(CalibraError, ValueError):
    pass
