"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (bad file, wrong shape, bad id)."""


class FormatError(DataError):
    """A file does not follow the expected container or text format."""


class InvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
