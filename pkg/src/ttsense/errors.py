"""Exception types raised across the package."""


class TTSenseError(Exception):
    """Base class for all package errors."""


class ShapeError(TTSenseError, ValueError):
    """Operands have incompatible mode sizes or ranks."""


class RangeError(TTSenseError, IndexError):
    """A multi-index or variable label is out of range."""


class DomainError(TTSenseError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ResourceError(TTSenseError, MemoryError):
    """An operation would exceed a configured size cap."""


class DataError(TTSenseError, ValueError):
    """A model returned non-finite output."""


class TransportError(TTSenseError, RuntimeError):
    """A subprocess evaluator died or replied with a malformed line."""


class EvaluatorTimeout(TransportError):
    """A subprocess evaluator did not reply in time."""


class DegenerateModelError(TTSenseError, ValueError):
    """The model output has zero variance over the input space."""


class ApproximationError(TTSenseError, RuntimeError):
    """A numerical approximation did not reach its requested accuracy."""


class ConsistencyError(TTSenseError, RuntimeError):
    """A computed quantity violates an invariant beyond its slack."""
