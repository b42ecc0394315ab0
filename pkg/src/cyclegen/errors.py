"""Exception types shared across the pipeline."""


class SchemaError(ValueError):
    """A required column or field is missing from an input file."""


class DataValidationError(ValueError):
    """Input data violates an invariant (ordering, finiteness, length)."""


class JoinError(DataValidationError):
    """Samples and per-cycle capacities do not line up."""


class ConfigError(ValueError):
    """Experiment or sub-configuration is malformed."""


class NumericalError(RuntimeError):
    """A loss or parameter became non-finite during optimisation."""


class MissingArtifactError(FileNotFoundError):
    """An upstream pipeline artifact is absent."""
