"""Exception hierarchy shared across the package."""


class SimflightError(Exception):
    """Base class for all package errors."""


class ContractError(SimflightError, ValueError):
    """A caller violated a documented precondition."""


class OutOfBoundsError(ContractError):
    """A query point lies outside the world bounding box."""


class ConfigError(SimflightError, ValueError):
    """Invalid or inconsistent configuration."""


class GenerationError(SimflightError, RuntimeError):
    """Procedural generation could not satisfy its constraints."""


class CheckpointError(SimflightError):
    """Base class for checkpoint I/O failures."""


class CheckpointNotFoundError(CheckpointError, FileNotFoundError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class ArchMismatchError(CheckpointError):
    pass


class TrainingDivergedError(SimflightError, RuntimeError):
    """Loss became non-finite during optimisation."""


class MetricError(SimflightError, ValueError):
    """A metric is undefined for the given inputs."""
