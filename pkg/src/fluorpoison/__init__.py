"""Fluorescent-trigger backdoor poisoning and evaluation for traffic-sign recognition."""

from fluorpoison.errors import (
    FluorPoisonError,
    InvalidInputError,
    InvalidSpecError,
    PlacementError,
    StageDependencyError,
    UnsupportedShapeError,
)
from fluorpoison.geometry import (
    SignBox,
    TriggerPlacement,
    compute_relative_area,
    compute_trigger_side,
    place_trigger,
    placement_center,
    verify_containment,
)

__version__ = "0.1.0"

__all__ = [
    "FluorPoisonError",
    "InvalidInputError",
    "InvalidSpecError",
    "PlacementError",
    "StageDependencyError",
    "UnsupportedShapeError",
    "SignBox",
    "TriggerPlacement",
    "compute_relative_area",
    "compute_trigger_side",
    "place_trigger",
    "placement_center",
    "verify_containment",
    "__version__",
]
