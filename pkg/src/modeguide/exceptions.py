"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`ModeGuideError`, so callers (and the CLI) can map families of
failures onto exit codes.
"""


class ModeGuideError(Exception):
    """Base class for all package errors."""


class ConfigError(ModeGuideError, ValueError):
    """Invalid parameter value or combination.

    ``field`` names the offending parameter when known.
    """

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class ShapeError(ModeGuideError, ValueError):
    """Array dimensions do not agree."""


class DiscoveryError(ModeGuideError, RuntimeError):
    """Mode discovery could not produce any mode."""


class MetricError(ModeGuideError, ValueError):
    """A metric is undefined for the given input."""


class TrainingError(ModeGuideError, ValueError):
    """The downstream classifier cannot be trained on the given set."""


class DivergenceError(ModeGuideError, ArithmeticError):
    """The reverse process produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularityError(ModeGuideError, ZeroDivisionError):
    """Division by a vanishing signal coefficient."""


class ParseError(ModeGuideError, ValueError):
    """Malformed input file; ``line`` is 1-based."""

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class SchemaError(ParseError):
    """Well-formed file whose contents disagree with its declared schema."""


class PlotError(ModeGuideError, ValueError):
    """Data cannot be rendered."""


class UnknownClassError(ModeGuideError, KeyError):
    """Class id not present in the model or dataset."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""
