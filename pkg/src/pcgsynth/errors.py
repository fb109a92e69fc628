"""Exception types shared across the pipeline."""


class PcgError(Exception):
    """Base class for all toolkit errors."""


class FormatError(PcgError):
    """Malformed input file (bad WAV header, bad manifest, bad checkpoint)."""


class UnsupportedFormatError(FormatError):
    """Well-formed file in a format we deliberately reject (e.g. stereo WAV)."""


class DegenerateSignalError(PcgError, ValueError):
    """Signal has no usable variation (constant, all-zero, ...)."""


class TrainingDivergedError(PcgError):
    """NaN or infinite loss encountered during optimization."""


class InsufficientDataError(PcgError):
    """Too few examples to run the requested estimator."""


class NumericDegeneracyError(PcgError):
    """Numerical search failed on degenerate input (e.g. duplicate-heavy t-SNE input)."""


class CheckInvalidError(PcgError):
    """A verification routine was handed inputs it cannot check (e.g. a non-deterministic loss)."""


class StageDependencyError(PcgError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, missing_path, hint=""):
        self.missing_path = str(missing_path)
        msg = f"missing upstream artifact: {self.missing_path}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


class ConfigError(PcgError):
    """Invalid or unreadable pipeline configuration."""
