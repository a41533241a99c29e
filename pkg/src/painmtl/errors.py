"""Exception hierarchy shared by every painmtl module."""


class PainMtlError(Exception):
    """Base class for all errors raised by painmtl."""


class ValidationError(PainMtlError, ValueError):
    """An argument violates a documented precondition."""


# signal
class BandEdgeError(ValidationError):
    pass


class SignalTooShort(ValidationError):
    pass


class NoBeatsDetected(PainMtlError):
    """The QRS detector never fired; HRV features are undefined for the window."""


class TooFewBeats(ValidationError):
    pass


# features
class WindowTooShort(ValidationError):
    pass


class TooFewIntervals(ValidationError):
    pass


class EmptyTrainingSet(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# data
class ParseError(PainMtlError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    pass


class LabelError(ParseError, ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


# nn / baselines
class UnknownTask(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyTask(ValidationError):
    pass


class NonFiniteLoss(PainMtlError, ArithmeticError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class SingleClassData(ValidationError):
    pass


class ExperimentError(PainMtlError):
    """A cross-validation fold failed; ``fold`` names which one."""

    def __init__(self, message, fold=None):
        self.fold = fold
        if fold is not None:
            message = f"fold {fold}: {message}"
        super().__init__(message)
