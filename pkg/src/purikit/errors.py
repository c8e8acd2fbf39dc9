"""Exception types raised across the package."""


class PurikitError(Exception):
    """Base class for all errors raised by purikit."""


class DimensionError(PurikitError, ValueError):
    """Shapes, labels or subsystem dimensions do not fit together."""


class CapacityError(PurikitError):
    """A requested computation exceeds a configured size limit."""


class NotPSDError(PurikitError, ValueError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class SignallingError(PurikitError):
    """An assemblage required to be non-signalling is not.

    The offending :class:`~purikit.assemblages.MarginalReport` is kept on
    ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InconsistencyError(PurikitError):
    """A construction failed an internal consistency check at working precision."""


class ParseError(PurikitError, ValueError):
    """Input data does not match the expected JSON schema.

    ``pointer`` is a JSON pointer to the offending location.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
