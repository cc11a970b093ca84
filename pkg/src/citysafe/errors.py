"""Exception hierarchy shared by every stage of the pipeline."""


class CitySafeError(Exception):
    """Base class for all library errors."""


class SchemaError(CitySafeError):
    def __init__(self, column: str, message: str | None = None):
        self.column = column
        super().__init__(message or f"schema mismatch at column {column!r}")


class EmptyDatasetError(CitySafeError):
    pass


class ConfigError(CitySafeError):
    pass


class LoadError(CitySafeError):
    def __init__(self, feature_index: int, message: str):
        self.feature_index = feature_index
        super().__init__(f"feature {feature_index}: {message}")


class GeocodingError(CitySafeError):
    pass


class ParameterError(CitySafeError, ValueError):
    pass


class UndefinedScoreError(CitySafeError):
    pass


class NoValidClusteringError(CitySafeError):
    pass


class FitError(CitySafeError):
    pass


class EvaluationError(CitySafeError, ValueError):
    pass


class SplitError(CitySafeError, ValueError):
    pass


class StageError(CitySafeError):
    """A pipeline stage failed; carries the manifest of what completed."""

    def __init__(self, stage: str, cause: BaseException, manifest=None):
        self.stage = stage
        self.cause = cause
        self.manifest = manifest
        super().__init__(f"stage {stage!r} failed: {cause}")
