"""Exception types shared across the package."""


class MetaheatError(Exception):
    """Base class for package-specific errors."""


class InvalidInstanceError(MetaheatError, ValueError):
    """Instance violates a structural precondition (range, shape, emptiness)."""


class ParseError(MetaheatError, ValueError):
    """Malformed instance/solution file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(MetaheatError, ValueError):
    """Array shape/layout mismatch between a score table and an instance."""


class ParameterError(MetaheatError, ValueError):
    """Out-of-domain scalar parameter (temperature, counts, learning rate...)."""


class SizeError(MetaheatError, ValueError):
    """Problem too large for an exact/enumeration routine's guard."""


class FeasibilityError(MetaheatError, ValueError):
    """A solution failed a hard feasibility check."""


class EstimatorError(MetaheatError, ValueError):
    """Gradient estimator preconditions violated (e.g. too few samples)."""


class AdaptationError(MetaheatError, RuntimeError):
    """Non-finite loss/gradient during fine-tuning; carries the step index."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class TrainingError(MetaheatError, RuntimeError):
    """Non-finite values or inconsistent state during training."""


class StateError(MetaheatError, RuntimeError):
    """Stateful object misuse (e.g. a backward trace consumed twice)."""


class MetricError(MetaheatError, ValueError):
    """Invalid metric arguments (e.g. non-positive reference objective)."""
