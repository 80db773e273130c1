"""Exception types shared across the package."""


class RedReflexError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(RedReflexError):
    """Invalid configuration value or inconsistent component wiring."""


class ManifestParseError(RedReflexError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class ManifestIntegrityError(RedReflexError):
    def __init__(self, missing_ids):
        super().__init__(f"missing image files for {len(missing_ids)} entries: "
                         + ", ".join(missing_ids[:10]))
        self.missing_ids = list(missing_ids)


class DataError(RedReflexError):
    """Dataset violates a precondition (missing labels, single class, ...)."""


class InsufficientDataError(DataError):
    """Too few samples for the requested statistical procedure."""


class PipelineError(RedReflexError):
    """Pupil localization / cropping failed on this image."""


class RemoteDetectorError(RedReflexError):
    def __init__(self, message, retry_after=None):
        super().__init__(message)
        self.retry_after = retry_after


class DetectorTimeout(RemoteDetectorError):
    pass


class TrainingError(RedReflexError):
    """Non-finite gradients or other unrecoverable optimizer state."""


class DegenerateMapError(RedReflexError):
    """Attention map has no positive values to locate a peak in."""
