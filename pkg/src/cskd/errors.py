"""Exception hierarchy shared by the library and the CLI."""


class CskdError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""

    exit_code = 1


class ConfigurationError(CskdError, ValueError):
    """Inconsistent parameters or key material."""


class ContractError(CskdError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class SolverError(CskdError, RuntimeError):
    """The reconstruction diverged."""

    def __init__(self, message, iteration=None, history=None):
        super().__init__(message)
        self.iteration = iteration
        self.history = history or []


class FrameError(CskdError, ValueError):
    """Malformed wire frame; carries the failing field and byte offset."""

    exit_code = 2

    def __init__(self, message, field, offset):
        super().__init__(f"{message} (field={field}, offset={offset})")
        self.field = field
        self.offset = offset


class TransportError(CskdError, OSError):
    exit_code = 2
