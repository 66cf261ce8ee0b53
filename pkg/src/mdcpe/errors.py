"""Exception hierarchy shared by all modules."""


class MdcpeError(Exception):
    """Base class for all package errors."""


class ShapeError(MdcpeError):
    """Tensor or volume dimensions do not conform."""


class InvalidConfig(MdcpeError):
    """A configuration value is out of its accepted range."""


class InvalidClass(MdcpeError):
    """A class label is outside [1, k] (or a target index outside [0, k))."""


class InvalidInput(MdcpeError):
    """An operation received empty or otherwise unusable data."""


class InsufficientClass(MdcpeError):
    """A ground-truth class has too few pixels to split."""


class InternalError(MdcpeError):
    """A broken internal contract (missing cache, misaligned snapshots)."""


class FormatError(MdcpeError):
    """A file failed to parse; the message names the offending offset/field."""


class EmptyEvaluation(MdcpeError):
    """Metrics requested on an empty confusion matrix."""
