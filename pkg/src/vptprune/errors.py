"""Exception hierarchy shared by every module."""


class VptError(Exception):
    """Base class for all errors raised by vptprune."""


class ShapeError(VptError, ValueError):
    pass


class ScheduleError(VptError, ValueError):
    pass


class ParameterError(VptError, ValueError):
    pass


class ConfigError(VptError, ValueError):
    pass


class RecoveryError(VptError, ValueError):
    pass


class ParseError(VptError, ValueError):
    pass


class NumericError(VptError, ArithmeticError):
    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block
