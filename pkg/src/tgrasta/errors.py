"""Exception hierarchy shared across the package."""


class TGrastaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(TGrastaError, ValueError):
    pass


class SingularTransform(TGrastaError, ValueError):
    pass


class OutOfBounds(TGrastaError):
    pass


class ZeroNorm(TGrastaError, ValueError):
    pass


class BadRank(TGrastaError, ValueError):
    pass


class DegenerateJacobian(TGrastaError):
    """Raised when J^T J has (numerically) zero trace, e.g. a constant image."""


class NonFinite(TGrastaError, FloatingPointError):
    pass


class ParseError(TGrastaError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormat(TGrastaError, ValueError):
    pass


class ConfigError(TGrastaError, ValueError):
    pass
