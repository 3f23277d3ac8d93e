"""Exception hierarchy shared across the toolkit."""


class GlareKitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(GlareKitError):
    """Invalid configuration, combo id, or incompatible shapes/options."""


class DataValidationError(GlareKitError):
    """Dataset layout or content failed validation."""


class TrainingDiverged(GlareKitError):
    """Training produced a non-finite loss."""
