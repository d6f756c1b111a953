"""Error taxonomy."""


class MfTrainError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MfTrainError):
    """Malformed dataset files, manifests, or normalization mismatches."""


class TrainingError(MfTrainError):
    """Diverged or misconfigured training runs."""


class ConfigError(MfTrainError):
    """Invalid configuration values."""
