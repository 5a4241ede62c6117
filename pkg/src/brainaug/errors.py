"""Exception hierarchy shared by every brainaug module."""


class BrainaugError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(BrainaugError, ValueError):
    """A binary file is malformed. ``offset`` is the byte offset of the problem, if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(BrainaugError, ValueError):
    pass


class LossyDataError(BrainaugError, ValueError):
    pass


class RangeError(BrainaugError, ValueError):
    pass


class ShapeError(BrainaugError, ValueError):
    pass


class InvalidLabelError(BrainaugError, ValueError):
    pass


class DegenerateStatsError(BrainaugError, ValueError):
    pass


class SizeError(BrainaugError, ValueError):
    pass


class EmptyInputError(BrainaugError, ValueError):
    pass


class StateError(BrainaugError, RuntimeError):
    pass


class DivergenceError(BrainaugError, RuntimeError):
    pass


class ValidationError(BrainaugError, ValueError):
    """Input files failed validation; ``offenders`` lists (name, reason) pairs."""

    def __init__(self, offenders):
        self.offenders = list(offenders)
        lines = [f"{name}: {reason}" for name, reason in self.offenders]
        super().__init__("validation failed:\n  " + "\n  ".join(lines))


class ConfigError(BrainaugError, ValueError):
    """Configuration is invalid; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration: " + "; ".join(self.violations))
