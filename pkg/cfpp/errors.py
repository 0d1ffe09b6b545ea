"""
Exception hierarchy for the car-following pipeline.

Every error raised on purpose by this package derives from ``CFPPError``
and from the builtin the situation would otherwise raise, so callers can
catch either. ``exit_code`` is what the command line reports when the
error escapes a stage.
"""

from typing import Any, Optional


class CFPPError(Exception):
    """Base class for all pipeline errors."""

    exit_code: int = 1


class ConfigError(CFPPError, ValueError):
    """Configuration could not be parsed or failed validation."""

    exit_code = 2


class StageDependencyError(CFPPError, RuntimeError):
    """A stage was run before the stage producing its inputs."""

    exit_code = 3

    def __init__(self, stage: str, missing: str):
        self.stage = stage
        self.missing = missing
        super().__init__(
            f"Stage '{stage}' requires '{missing}'; run the producing stage first"
        )


class DataIntegrityError(CFPPError, ValueError):
    """Input data violates the schema or a physical invariant."""

    exit_code = 4


class SchemaError(DataIntegrityError):
    """A required column is missing from an input file."""

    def __init__(self, column: str, path: Any = None):
        self.column = column
        self.path = path
        where = f" in {path}" if path is not None else ""
        super().__init__(f"Missing required column '{column}'{where}")


class IntegrityError(DataIntegrityError):
    """Frames of a vehicle are not contiguous."""

    def __init__(self, vehicle_id: int, detail: str):
        self.vehicle_id = vehicle_id
        super().__init__(f"Vehicle {vehicle_id}: {detail}")


class DirectionAmbiguityError(DataIntegrityError):
    """Travel direction cannot be decided from the mean velocity."""

    def __init__(self, vehicle_ids):
        self.vehicle_ids = list(vehicle_ids)
        super().__init__(
            f"Mean longitudinal velocity is exactly 0 for vehicles {self.vehicle_ids}"
        )


class SeriesRangeError(DataIntegrityError):
    """A frame window lies outside a track's span."""


class DomainError(DataIntegrityError):
    """A numeric input is outside the domain of a formula."""


class ShapeError(CFPPError, ValueError):
    """Array shapes do not match a network's layer widths."""


class CacheUsageError(CFPPError, RuntimeError):
    """A forward cache was reused after the network changed."""


class TrainingDivergenceError(CFPPError, RuntimeError):
    """Training produced a non-finite quantity.

    ``last_model`` holds the most recent model whose losses were finite,
    so the caller can still persist it.
    """

    exit_code = 5

    def __init__(self, message: str, epoch: Optional[int] = None, last_model: Any = None):
        self.epoch = epoch
        self.last_model = last_model
        super().__init__(message)
