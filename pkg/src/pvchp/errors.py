"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PvChpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PvChpError, ValueError):
    """Invalid or incomplete configuration."""


# -- solver -----------------------------------------------------------------


class SolverError(PvChpError):
    pass


class IterationLimitError(SolverError):
    def __init__(self, limit: int) -> None:
        super().__init__(f"simplex iteration limit of {limit} exceeded")
        self.limit = limit


class NumericalBreakdownError(SolverError):
    pass


class ScheduleInfeasibleError(SolverError):
    pass


# -- model construction -----------------------------------------------------


class DimensionMismatchError(PvChpError, ValueError):
    pass


class InfeasibleInitialStateError(PvChpError, ValueError):
    pass


class InfeasibleDischargeError(PvChpError, ValueError):
    pass


# -- profiles ---------------------------------------------------------------


class ProfileError(PvChpError, ValueError):
    pass


class MalformedRowError(ProfileError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line


class MisalignedTimestampsError(ProfileError):
    pass


class NegativeValueError(ProfileError):
    pass


class InsufficientHistoryError(ProfileError):
    pass


class MissingPriceSeriesError(ConfigError):
    pass


class AlignmentMismatchError(PvChpError, ValueError):
    pass


class ThermalInfeasibleError(PvChpError):
    """Heat demand could not be met with the boiler at full output."""

    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class SimulationStepError(PvChpError):
    """An error raised while simulating one step; the original is ``__cause__``."""

    def __init__(self, step: int, cause: Exception) -> None:
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
