"""Exception taxonomy shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, DataError and its
subclasses -> 3, everything else -> 1.
"""


class CganlabError(Exception):
    """Base class for all package errors."""


class ConfigError(CganlabError):
    """Bad configuration value, unknown option, or inconsistent flags."""


class DimensionError(CganlabError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(CganlabError):
    """A runtime value contract was violated (range, one-hot, finiteness)."""


class DataError(CganlabError):
    """Dataset-level input problem: missing file, empty split, bad labels."""


class ParseError(DataError):
    """Malformed binary file. Carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
