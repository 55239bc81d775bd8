"""
Exception family shared by the engines, services and the command line.
"""


class SubdiffusionError(Exception):
    pass


class DomainError(SubdiffusionError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class StepBudgetExhausted(SubdiffusionError):
    """The clock never passed the target within max_steps."""


class TimeOverflow(SubdiffusionError):
    """The clock passed the overflow cap; the path was truncated."""


class PathTooShort(SubdiffusionError):
    """An external time at or beyond the final clock value was queried."""


class InsufficientRange(SubdiffusionError):
    """A log-log fit was asked for on fewer than 10 points or 2 decades."""


class SolverFailure(SubdiffusionError):
    pass


class ExperimentAborted(SubdiffusionError):
    """Too many incomplete paths for the ensemble to be trusted."""


class ConfigError(SubdiffusionError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f" [key '{key}'" + (f", line {line}]" if line is not None else "]")
        super().__init__(f"{message}{where}")
