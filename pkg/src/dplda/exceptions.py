"""Exception hierarchy.

Argument and format problems derive from ``ValueError``; failures that the
pipeline hits on valid input (collapsed spectra, calibration hitting zero)
derive from ``PipelineError`` so callers can tell the two apart.
"""


class DPLDAError(Exception):
    """Base class for all package errors."""


class CorpusFormatError(DPLDAError, ValueError):
    """A corpus or model file could not be parsed."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(DPLDAError, ValueError):
    """A corpus violates the requirements of moment estimation."""

    def __init__(self, message, offending=()):
        self.offending = tuple(offending)
        super().__init__(message)


class PipelineError(DPLDAError, RuntimeError):
    """Typed failure raised by the estimation pipeline on valid input."""


class RankDeficientError(PipelineError):
    pass


class EigenvalueError(PipelineError):
    pass


class CalibrationError(PipelineError):
    pass
