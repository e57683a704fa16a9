"""Exception hierarchy shared by every stage of the pipeline."""


class FilerError(Exception):
    """Base class for all pipeline errors."""


class UnsupportedFormat(FilerError):
    pass


class ZeroSizedImage(FilerError):
    pass


class DimensionMismatch(FilerError):
    pass


class EvenKernel(FilerError):
    pass


class InvalidConfig(FilerError):
    pass


class EmptyStack(FilerError):
    pass


class ImageTooSmall(FilerError):
    pass


class TooFewOrientations(FilerError):
    pass


class PatchOutOfBounds(FilerError):
    pass


class EmptyPatch(FilerError):
    pass


class EmptyDescriptorSet(FilerError):
    pass


class InsufficientMatches(FilerError):
    pass


class DegenerateGeometry(FilerError):
    pass


class NoConsensus(FilerError):
    pass


class ZeroFeatures(FilerError):
    pass


class EmptyReportList(FilerError):
    pass


class TooFewLandmarks(FilerError):
    pass


class NonInvertibleAffine(FilerError):
    pass


class InvalidSpec(FilerError):
    pass
