"""Exception types shared across the package.

The CLI maps these onto its stable exit codes, so new failure modes should
subclass one of the existing categories rather than raising bare exceptions.
"""


class UsageError(ValueError):
    """Caller violated a precondition (bad dimensions, bad flag values, ...)."""


class NumericalFailureError(RuntimeError):
    """A computation produced NaN/Inf where finite values are required."""


class PersistError(Exception):
    """Base class for file-format problems (parse errors, bad versions)."""


class ParseError(PersistError):
    """Malformed file content; carries enough context to locate the damage."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class UnsupportedFormatError(PersistError):
    """Recognized file, but it uses a feature or version we do not handle."""


class IntegrityError(PersistError):
    """File parsed, but its internal consistency checks failed."""
