"""Exception hierarchy shared by every module.

``DataError`` subclasses are the ones the CLI reports with exit code 2;
``NoFragments`` maps to exit code 3.
"""


class BarkEmoError(Exception):
    """Base class for all package errors."""


class DataError(BarkEmoError):
    """Bad or insufficient input data."""


# audio_io
class WavError(DataError):
    pass


class MissingMagic(WavError):
    pass


class UnsupportedFormat(WavError):
    pass


class Truncated(DataError):
    """Declared size exceeds the available bytes (WAV or checkpoint)."""


# data_pipeline
class UnknownLabel(DataError):
    pass


class MalformedRow(DataError):
    pass


class InsufficientData(DataError):
    def __init__(self, message, label=None, split=None):
        super().__init__(message)
        self.label = label
        self.split = split


class NoFragments(BarkEmoError):
    """Every window was gated out or the clip is shorter than one fragment."""


# nn_core / model
class ShapeMismatch(BarkEmoError, ValueError):
    pass


class DegenerateBatch(BarkEmoError, ValueError):
    pass


class LabelOutOfRange(BarkEmoError, ValueError):
    pass


class BadConfig(BarkEmoError, ValueError):
    pass


class CheckpointError(DataError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CheckpointTruncated(CheckpointError, Truncated):
    pass


# training / evaluation
class EmptySplit(DataError):
    pass


class LengthMismatch(BarkEmoError, ValueError):
    pass


class EmptyInput(BarkEmoError, ValueError):
    pass


class EmptyMatrix(EmptyInput):
    pass
