"""Exception types shared across the pipeline."""


class RidgelineError(Exception):
    """Base class for all pipeline errors."""


class ContractError(RidgelineError):
    """An argument violates an operation's precondition (shape, range, dtype)."""


class FormatError(RidgelineError):
    """A file exists but cannot be parsed as the expected format."""


class ConfigError(RidgelineError):
    """A configuration value is missing, unknown, or out of its allowed range."""


class DataError(RidgelineError):
    """A dataset, split, or pair set cannot support the requested operation."""


class DegenerateInputError(RidgelineError):
    """Input carries no usable signal (zero variance, all-invalid blocks, zero vector)."""


class CheckpointError(RidgelineError):
    """A checkpoint file is corrupted, has an unknown version, or a mismatched component."""


class DependencyError(RidgelineError):
    """A required upstream artifact is missing; message names the file."""
