"""Exception hierarchy.

Every error carries a distinct process exit code so the CLI can map failures
to machine-parsable single-line diagnostics.
"""


class LipreadError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(LipreadError):
    exit_code = 2


class DecodeError(LipreadError):
    """Input video or image could not be decoded."""

    exit_code = 3


class SegmentationError(LipreadError):
    """Fewer motion bursts than declared words: recording does not match protocol."""

    exit_code = 4


class NoFaceDetected(LipreadError):
    exit_code = 5


class EmptyVocabulary(LipreadError):
    exit_code = 6


class EmptyCorpus(LipreadError):
    exit_code = 7


class UnreadableClip(LipreadError):
    exit_code = 8


class AllFramesInvalid(LipreadError):
    """Landmark detection failed on every frame of a clip."""

    exit_code = 9


class DegenerateGeometry(LipreadError):
    """All landmark points coincide; normalization scale would be zero."""

    exit_code = 10


class InvalidSpec(LipreadError):
    exit_code = 11


class ShapeMismatch(LipreadError):
    exit_code = 12


class CorruptCheckpoint(LipreadError):
    exit_code = 13


class MissingCheckpoint(LipreadError):
    exit_code = 14


class TooFewSamples(LipreadError):
    """A class has fewer records than the split scheme requires."""

    exit_code = 15


class DivergedTraining(LipreadError):
    """Non-finite loss encountered; carries the partial log."""

    exit_code = 16

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class EmptySplit(LipreadError):
    exit_code = 17


class SourceClosed(LipreadError):
    """Frame source ended; used for clean shutdown signalling."""

    exit_code = 18


class RobotUnavailable(LipreadError):
    exit_code = 19
