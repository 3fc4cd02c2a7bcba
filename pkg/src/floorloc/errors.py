"""Exception hierarchy for the localization engine."""


class FloorlocError(ValueError):
    """Base class for all engine errors."""


class OriginOccupied(FloorlocError):
    pass


class OriginOutOfMap(FloorlocError):
    pass


class BadFov(FloorlocError):
    pass


class LayoutMismatch(FloorlocError):
    pass


class AtInfinity(FloorlocError):
    """Homogeneous coordinate too close to zero to dehomogenize."""


class NoSourceViews(FloorlocError):
    pass


class DegenerateGeometry(FloorlocError):
    """No column of the cost distribution is observed by two or more views."""


class HypothesisMismatch(FloorlocError):
    pass


class EmptyPoseList(FloorlocError):
    pass


class NoValidColumns(FloorlocError):
    pass


class FovExceedsCamera(FloorlocError):
    pass


class EmptyVolume(FloorlocError):
    pass


class NoFreeCells(FloorlocError):
    pass


class ShapeMismatch(FloorlocError):
    pass


class ZeroPosterior(FloorlocError):
    """All posterior mass was annihilated by an observation."""

    def __init__(self, message="posterior mass vanished", step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class StartOccupied(FloorlocError):
    pass


class Stuck(FloorlocError):
    pass


class LengthMismatch(FloorlocError):
    pass


class TooShort(FloorlocError):
    pass


class FormatError(FloorlocError):
    """Malformed binary or JSON input file."""
