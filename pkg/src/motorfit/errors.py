"""Exception hierarchy shared by every stage of the toolkit."""


class MotorfitError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""

    stage = "motorfit"


class InvalidInputError(MotorfitError, ValueError):
    """Malformed data or arguments (CLI exit code 2)."""

    stage = "input"


class InvalidModelError(InvalidInputError):
    """State-space matrices or transfer-function coefficients are inconsistent."""

    stage = "model"


class ParseError(InvalidInputError):
    stage = "load"


class SyncError(InvalidInputError):
    stage = "synchronize"


class IdentificationError(MotorfitError):
    """An identification algorithm could not produce a model (CLI exit code 3)."""

    stage = "identify"


class OrderTooHighError(IdentificationError):
    stage = "realize"


class AmbiguousDominanceError(MotorfitError, ValueError):
    stage = "reduce"
