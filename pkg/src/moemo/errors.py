class MoemoError(Exception):
    """Base class for toolkit errors."""


class ValidationError(MoemoError):
    """Input data violates a documented invariant."""


class FormatError(ValidationError):
    """An interchange or checkpoint file is malformed."""
