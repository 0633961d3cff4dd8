"""Exception hierarchy shared by every portqueue module."""

from __future__ import annotations


class PortQueueError(Exception):
    """Base class for all errors raised by portqueue."""


class ValidationError(PortQueueError, ValueError):
    """A model object violates one of its invariants.

    ``path`` locates the offending value using config-document notation,
    e.g. ``subsystems[0].ports[0].berth_rates[1]``.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        self.reason = message
        super().__init__(f"{message} at {path}" if path else message)


class EmptyTopology(ValidationError):
    pass


class NonPositiveRate(ValidationError):
    pass


class DuplicateLabel(ValidationError):
    pass


class InvalidDegree(ValidationError):
    pass


class IndexOutOfRange(PortQueueError, IndexError):
    pass


class InstabilityError(PortQueueError):
    """Steady-state metrics were requested for an overloaded system or port."""

    def __init__(self, message: str, rho: float):
        self.rho = rho
        super().__init__(message)


class UnstableSystem(InstabilityError):
    pass


class UnstablePort(InstabilityError):
    def __init__(self, message: str, rho: float, port: tuple[int, int] | None = None):
        self.port = port
        super().__init__(message, rho)


class NumericOverflow(PortQueueError, ArithmeticError):
    pass


class HorizonTooShort(PortQueueError):
    pass


class NonDrainedTrace(PortQueueError):
    pass


class ConfigSyntaxError(PortQueueError):
    def __init__(self, message: str, line: int | None, column: int | None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"syntax error{where}: {message}")


class SchemaError(PortQueueError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{reason} at {path}" if path else reason)
