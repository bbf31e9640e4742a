"""Exception hierarchy shared by all modules."""


class EntrosenseError(Exception):
    pass


class ParameterError(EntrosenseError, ValueError):
    """An argument is outside the operation's precondition."""


class DomainError(EntrosenseError, ArithmeticError):
    """The requested quantity is undefined for this input (e.g. zero rank)."""


class NotPSDError(DomainError):
    pass


class FieldFormatError(EntrosenseError, ValueError):
    """A scenario or config file could not be parsed or failed validation."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
