"""Error taxonomy shared across the package.

Each family maps to a distinct CLI exit code so failures are scriptable:
config=2, io=3, backend=4, judge-parse=5.
"""


class OwcError(Exception):
    exit_code = 1


class ConfigError(OwcError):
    exit_code = 2


class IngestError(OwcError):
    """File-level failure; carries the offending path and line when known."""

    exit_code = 3

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)


class MissingSplitsError(IngestError):
    """Raised when external precomputed splits lack an entry for a prediction."""


class BackendError(OwcError):
    exit_code = 4
    retriable = False

    def __init__(self, message: str, *, text: str | None = None):
        self.text = text
        super().__init__(message)


class TransportError(BackendError):
    retriable = True


class MalformedResponseError(BackendError):
    pass


class DimensionMismatchError(BackendError):
    pass


class JudgeParseError(OwcError):
    """Judge reply did not contain a standalone 0/1 verdict."""

    exit_code = 5

    def __init__(self, message: str, reply: str = ""):
        self.reply = reply
        super().__init__(message)
