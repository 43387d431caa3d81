"""Exception hierarchy shared across the package."""


class SketchDiffError(Exception):
    """Base class for all domain errors."""


class ParseError(SketchDiffError):
    """Malformed input file."""


class DataError(SketchDiffError):
    """Invalid sketch/point data (bad pen values, NaN coordinates, ...)."""


class PreprocessingError(SketchDiffError):
    """Sketch cannot be preprocessed (e.g. zero arc length)."""


class MetricError(SketchDiffError):
    """Invalid input to a metric (e.g. empty point set)."""


class ConfigError(SketchDiffError):
    """Invalid configuration value."""


class ContractError(SketchDiffError):
    """Operation precondition violated (shape mismatch, bad step order)."""


class StateError(SketchDiffError):
    """Operation requires state that is not present (e.g. unloaded weights)."""


class ModeError(SketchDiffError):
    """Checkpoint trained in a different conditioning mode than required."""


class CheckpointError(SketchDiffError):
    """Corrupt, truncated or incompatible checkpoint archive."""


class TrainingError(SketchDiffError):
    """Training diverged (non-finite loss)."""


class HarnessError(SketchDiffError):
    """Evaluation harness prerequisite not met (e.g. weak toy classifier)."""


class GradientCheckError(SketchDiffError):
    """Analytic vs finite-difference gradient mismatch."""
