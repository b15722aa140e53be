"""Exception types shared across the package."""


class WdsmError(Exception):
    """Base class for all package errors."""


class ShapeError(WdsmError, ValueError):
    """Operands have incompatible shapes."""


class DomainError(WdsmError, ValueError):
    """A value violates an operation's domain contract."""


class NumericError(WdsmError, ArithmeticError):
    """A numerically invalid operation, e.g. division by zero."""


class PgmError(WdsmError, ValueError):
    """Malformed PGM data.  Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointError(WdsmError, ValueError):
    """Unreadable or corrupt checkpoint file."""


class GenerationError(WdsmError, RuntimeError):
    """Phantom generation could not reach the requested density class."""
