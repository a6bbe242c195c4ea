"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model, operator, or run was configured with incompatible settings."""


class DegenerateInputError(ValueError):
    """An input is structurally valid but has no well-defined result (e.g. a zero-norm symbol vector)."""


class ValidationError(ValueError):
    """A config file failed schema validation."""


class DependencyError(RuntimeError):
    """A pipeline stage was invoked before the stage it depends on produced its artifact."""


class IngestionError(RuntimeError):
    """A dataset directory could not be ingested (missing or undecodable files)."""
