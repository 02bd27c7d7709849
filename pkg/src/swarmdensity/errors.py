"""Exception types shared across the package."""


class SwarmDensityError(Exception):
    """Base class for all package errors."""


class DegenerateProjectionError(SwarmDensityError):
    """A target straddles the camera plane (some corners in front, some behind)."""


class GenerationError(SwarmDensityError):
    """Scene or dataset generation could not satisfy its constraints."""


class DatasetError(SwarmDensityError):
    """A dataset directory is malformed or fails validation."""


class NumericalError(SwarmDensityError):
    """A non-finite value appeared during forward/backward or training."""

    def __init__(self, message, layer=None):
        super().__init__(message if layer is None else f"{message} (layer {layer})")
        self.layer = layer
