"""Exception hierarchy shared by every module.

Everything raised on bad *input* derives from :class:`StluError`, which the
CLI maps to exit code 2.  Anything else escaping the CLI is a bug (exit 1).
"""


class StluError(Exception):
    kind = "error"


class InsufficientSamplesError(StluError):
    kind = "insufficient-samples"


class DataParseError(StluError):
    """Malformed CSV/JSON input; ``row`` and ``column`` are 1-based when known."""

    kind = "parse"

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ShapeError(DataParseError):
    kind = "shape"


class NonFiniteValueError(DataParseError):
    kind = "value"


class FormulaSyntaxError(StluError):
    kind = "syntax"

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position


class SignalLookupError(StluError):
    """No flowpipe registered for an atom's (channel, epsilon) pair."""

    kind = "environment"


class HorizonError(StluError):
    """The signal is too short to evaluate the formula at the requested step."""

    kind = "horizon"


class ContractError(StluError, ValueError):
    kind = "contract"
