"""Exception hierarchy shared by every module."""

from __future__ import annotations


class InfCanvasError(Exception):
    """Base class for all library errors."""


class ContainmentError(InfCanvasError, ValueError):
    pass


class ShapeError(InfCanvasError, ValueError):
    pass


class ChannelError(InfCanvasError, IndexError):
    pass


class ParameterError(InfCanvasError, ValueError):
    pass


class UnderflowError(InfCanvasError, ValueError):
    """An input is too small for a layer or network to produce any output.

    Attributes:
        layer: name of the layer that cannot be evaluated (may be empty).
        required: minimal input side length that layer needs.
    """

    def __init__(self, message: str, layer: str = "", required: int | None = None):
        super().__init__(message)
        self.layer = layer
        self.required = required


class InconsistentNetworkError(InfCanvasError, ValueError):
    def __init__(self, message: str, layer: str = ""):
        super().__init__(message)
        self.layer = layer


class PlanningError(InfCanvasError, ValueError):
    pass


class ContractError(InfCanvasError, ValueError):
    pass


class SpecError(InfCanvasError, ValueError):
    pass


class WeightFileError(InfCanvasError):
    pass


class ChecksumError(WeightFileError):
    pass


class ManifestError(WeightFileError):
    pass


class UnknownTensorError(WeightFileError, KeyError):
    pass
