"""Exception hierarchy shared by every kdlab package."""

from typing import Iterable, List, Optional


class KDLabError(Exception):
    """Base class for all errors raised by kdlab."""

    pass


class ConfigurationError(KDLabError):
    """Exception raised when a spec, config value or init parameter is invalid."""

    pass


class ConfigParseError(ConfigurationError):
    """Exception raised when configuration text is not well-formed JSON."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        """
        Initialize with the parser location.

        Args:
            message: Description of the parse failure
            line: 1-based line of the failure, if known
            column: 1-based column of the failure, if known
        """
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


class ValidationError(ConfigurationError):
    """Exception raised when one or more configuration checks fail."""

    def __init__(self, errors: Iterable[str]):
        """
        Initialize with every violation found.

        Args:
            errors: Human readable violations, each naming the offending field
        """
        self.errors: List[str] = list(errors)
        super().__init__("; ".join(self.errors))


class RegistrationError(ConfigurationError):
    """Exception raised when a loss or scheduler cannot be registered."""

    pass


class ShapeError(KDLabError):
    """Exception raised when tensor shapes do not conform for an operation."""

    pass


class InputError(KDLabError):
    """Exception raised for invalid input data (ids, labels, masks)."""

    pass


class ContractError(KDLabError):
    """Exception raised when a caller breaks an API contract."""

    pass


class FormatError(KDLabError):
    """Exception raised when a weight file cannot be decoded or does not match."""

    pass
