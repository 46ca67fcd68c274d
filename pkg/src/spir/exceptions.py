"""Exception hierarchy shared by the library and the command line."""


class SpirError(Exception):
    """Base class for every error raised by spir."""


class InvalidParameterError(SpirError, ValueError):
    pass


class InvalidDimensionError(InvalidParameterError):
    pass


class DimensionMismatchError(SpirError, ValueError):
    pass


class LengthMismatchError(SpirError, ValueError):
    pass


class EmptyInputError(SpirError, ValueError):
    pass


class UnreachableTargetError(SpirError, ValueError):
    pass


class MetricMismatchError(SpirError, TypeError):
    pass


class CorpusError(SpirError):
    """Missing document, reference or malformed corpus directory."""


class ProtocolError(SpirError):
    """Wire-level failure. ``code`` is the u16 carried by error frames."""

    def __init__(self, code, message):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message


class UnknownBundleError(SpirError, KeyError):
    pass
