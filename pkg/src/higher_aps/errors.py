"""Exception types shared across the package; the CLI maps them to exit codes."""


class HigherAPSError(Exception):
    pass


class ConfigError(HigherAPSError):
    """Bad configuration or mismatched inputs (CLI exit code 2)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class PreconditionError(HigherAPSError):
    pass


class InfeasibleError(HigherAPSError):
    """Gap or invertibility check failed (CLI exit code 3)."""


class IdempotencyError(HigherAPSError):
    pass


class ConvergenceError(HigherAPSError):
    pass
