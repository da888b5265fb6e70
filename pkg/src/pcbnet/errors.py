"""Exception hierarchy shared by every pcbnet module."""


class PcbnetError(Exception):
    """Base class; ``record()`` gives the machine-readable form the CLI prints."""

    def record(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ShapeError(PcbnetError, ValueError):
    pass


class NumericError(PcbnetError, ArithmeticError):
    pass


class ValidationError(PcbnetError, ValueError):
    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])

    def record(self) -> dict:
        rec = super().record()
        if self.violations:
            rec["violations"] = [str(v) for v in self.violations]
        return rec


class ParseError(PcbnetError, ValueError):
    def __init__(self, message, token=None):
        super().__init__(message)
        self.token = token


class FormatError(PcbnetError, ValueError):
    """Malformed binary file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset

    def record(self) -> dict:
        rec = super().record()
        rec["offset"] = self.offset
        return rec


class ConfigError(PcbnetError, ValueError):
    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = list(fields or [])


class TooShortError(PcbnetError, ValueError):
    def __init__(self, length, depth):
        super().__init__(f"segment has {length} frames, need at least {depth}")
        self.length = length
        self.depth = depth


class InsufficientSamplesError(PcbnetError, ValueError):
    def __init__(self, label, required, available):
        super().__init__(f"{label} pool has {available} sources, {required} required")
        self.required = required
        self.available = available


class StratificationError(PcbnetError, ValueError):
    pass
