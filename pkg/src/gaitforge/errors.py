"""Exception types raised across gaitforge."""


class GaitforgeError(Exception):
    """Base class for all package errors."""


class MissingColumn(GaitforgeError, ValueError):
    def __init__(self, column):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class MalformedNumber(GaitforgeError, ValueError):
    def __init__(self, row, column, text):
        super().__init__(f"row {row}: cannot parse {text!r} in column {column!r}")
        self.row = row
        self.column = column
        self.text = text


class EmptyTable(GaitforgeError, ValueError):
    pass


class InvalidRow(GaitforgeError, ValueError):
    def __init__(self, row, reason):
        super().__init__(f"row {row}: {reason}")
        self.row = row


class TooFewSamples(GaitforgeError, ValueError):
    pass


class MixedResolution(GaitforgeError, ValueError):
    pass


class DegenerateSpeeds(GaitforgeError, ValueError):
    pass


class SpeedOutOfRange(GaitforgeError, ValueError):
    pass


class TooShort(GaitforgeError, ValueError):
    pass


class ShapeMismatch(GaitforgeError, ValueError):
    pass


class NumericalBlowup(GaitforgeError, FloatingPointError):
    pass


class LambdaOutOfRange(GaitforgeError, ValueError):
    pass


class EmptyBatch(GaitforgeError, ValueError):
    pass


class NonFiniteGradient(GaitforgeError, FloatingPointError):
    pass


class BadPeriod(GaitforgeError, ValueError):
    pass


class TimeOutOfRange(GaitforgeError, ValueError):
    pass


class NoStrides(GaitforgeError, ValueError):
    pass


class ConfigError(GaitforgeError, ValueError):
    pass
