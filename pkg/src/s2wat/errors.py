"""Exception hierarchy shared by every module of the package."""


class S2WATError(Exception):
    """Base class for all package errors."""


class DimensionError(S2WATError, ValueError):
    """Operand extents are incompatible with an operation."""


class ContractError(S2WATError, ValueError):
    """A caller-side precondition was violated."""


class GeometryError(S2WATError, ValueError):
    """A patch grid does not divide into the requested windows."""


class ConfigurationError(S2WATError, ValueError):
    """Inconsistent hyperparameters or option combinations."""


class UnsupportedPaddingError(S2WATError, ValueError):
    """Reflection padding requested beyond what the extent allows."""


class InputTooSmallError(UnsupportedPaddingError):
    """Input image or grid too small for the configured strip widths."""


class FormatError(S2WATError, ValueError):
    """Malformed weights, image or config file."""


class NumericError(S2WATError, ArithmeticError):
    """A non-finite value appeared where finite values are required."""
