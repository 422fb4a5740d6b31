"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit with 2,
missing chain data with 3 and numerical failures with 4.
"""


class McmcCvError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(McmcCvError, ValueError):
    """Invalid user configuration or argument."""


class ChainFormatError(McmcCvError, ValueError):
    """A chain file could not be parsed.

    ``row`` and ``column`` are 1-based positions in the file body (the header
    row is not counted) when the error can be located.
    """

    def __init__(self, message, path=None, row=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.path = path
        self.row = row
        self.column = column


class ShapeMismatchError(ChainFormatError):
    """Blocks of a chain have incompatible shapes."""


class NonFiniteError(ChainFormatError):
    """A NaN or infinite value was found where finite numbers are required."""


class DataRequirementError(McmcCvError, ValueError):
    """A method needs a chain block (gradients, proposals, ...) that is absent."""


class NumericalError(McmcCvError, ArithmeticError):
    """A linear solve or optimisation failed."""


class SingularMatrixError(NumericalError):
    """A matrix that must be invertible is (numerically) singular."""
