"""Exception taxonomy shared across the package."""


class SigfuseError(Exception):
    """Base class for all package errors."""


class InvalidInput(SigfuseError, ValueError):
    """Arguments violate a documented precondition."""


class DegenerateInput(SigfuseError, ValueError):
    """Input is structurally valid but carries no usable signal (all-zero, zero-variance)."""


class ShapeError(SigfuseError, ValueError):
    """Tensor shape mismatch; message names the offending layer."""


class StateError(SigfuseError, RuntimeError):
    """Operation requires state (forward cache, trained net, tap) that is missing."""


class BuildError(SigfuseError, ValueError):
    """Architecture hyperparameters cannot produce a valid network."""


class NumericError(SigfuseError, RuntimeError):
    """Non-finite value encountered during computation."""


class NoComplementaryPair(SigfuseError, LookupError):
    """No domain pair satisfies the complementarity predicates."""


class ConfigError(SigfuseError, ValueError):
    """Run configuration failed schema validation."""


class PipelineError(SigfuseError, RuntimeError):
    """A pipeline stage failed; message names the stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class SkippedClassWarning(UserWarning):
    """A class was skipped during oversampling (too few samples to interpolate)."""
