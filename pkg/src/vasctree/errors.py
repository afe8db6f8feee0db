"""Exception hierarchy shared by every stage of the pipeline."""


class VasctreeError(Exception):
    """Base class for all errors raised by vasctree."""


class BoundsError(VasctreeError, IndexError):
    pass


class EmptyFeatureSet(VasctreeError):
    pass


class EmptyMask(VasctreeError):
    pass


class SeedOutsideRange(VasctreeError):
    pass


class NoRootCandidate(VasctreeError):
    pass


class InsufficientData(VasctreeError):
    pass


class InvalidParameter(VasctreeError, ValueError):
    pass


class GridMismatch(VasctreeError):
    pass


class InvalidSpec(VasctreeError, ValueError):
    pass


class SelfIntersection(VasctreeError):
    pass


class TreeOutOfBounds(VasctreeError):
    pass


class CorruptData(VasctreeError):
    pass


class UnsupportedFormat(VasctreeError):
    pass


class InvalidHeader(UnsupportedFormat):
    pass


class StageError(VasctreeError):
    """Wraps an error raised inside a pipeline stage, tagging the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
