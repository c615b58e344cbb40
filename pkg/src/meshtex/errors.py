"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/parse problems exit 2,
numerical failures exit 3, IO failures exit 4.
"""


class MeshTexError(Exception):
    """Base class for all package errors."""


class ParseError(MeshTexError):
    """A mesh or config file failed to parse.

    Carries the offending path and (1-based) line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)


class ValidationError(MeshTexError):
    """Invalid argument, precondition violation, or bad configuration."""


class DataError(MeshTexError):
    """A dataset file is missing or corrupt (bad magic, truncated, ...)."""


class SolveError(MeshTexError):
    """A numerical routine failed to produce a usable result."""
