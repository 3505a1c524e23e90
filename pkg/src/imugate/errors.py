"""Exception types shared across the package."""


class ImuGateError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(ImuGateError, ValueError):
    """A sample cannot produce a defined feature value (e.g. zero acceleration)."""


class InsufficientDataError(ImuGateError, ValueError):
    """Not enough samples, windows or classes to compute the requested quantity."""


class EmptyWindowError(ImuGateError, ValueError):
    pass


class DegenerateTemplateError(ImuGateError, ValueError):
    """A template has zero variance over its bins, so NCC is undefined."""


class DataFormatError(ImuGateError, ValueError):
    """A dataset file does not follow its published layout."""


class EmptyStreamError(ImuGateError, ValueError):
    pass


class ProtocolError(ImuGateError, ValueError):
    """Verdicts and ground truth do not share the same windowing."""
