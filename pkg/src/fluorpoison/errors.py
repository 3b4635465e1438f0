"""Exception hierarchy shared by every pipeline stage."""


class FluorPoisonError(Exception):
    """Base class; ``category`` is reported by the CLI and picks the exit code."""

    category = "error"
    exit_code = 1


class InvalidInputError(FluorPoisonError, ValueError):
    category = "invalid-input"
    exit_code = 2


class InvalidSpecError(InvalidInputError):
    category = "invalid-spec"
    exit_code = 2


class UnsupportedShapeError(InvalidInputError):
    category = "unsupported-shape"
    exit_code = 2


class PlacementError(FluorPoisonError):
    category = "placement"
    exit_code = 3


class StageDependencyError(FluorPoisonError):
    category = "stage-dependency"
    exit_code = 4
