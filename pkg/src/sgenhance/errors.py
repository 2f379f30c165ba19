"""Exception types. Each carries the CLI exit code it maps to."""


class EnhanceError(Exception):
    exit_code = 4


class UsageError(EnhanceError):
    exit_code = 1


class AudioFormatError(EnhanceError):
    """Base for WAV ingestion failures."""

    exit_code = 2


class UnsupportedFormatError(AudioFormatError):
    pass


class MultichannelError(AudioFormatError):
    pass


class TruncatedFileError(AudioFormatError):
    pass


class SampleRateMismatchError(AudioFormatError):
    pass


class CorpusError(AudioFormatError):
    pass


class ModelError(EnhanceError):
    """Missing model file, bad container, or geometry that disagrees with the STFT config."""

    exit_code = 3


class DegenerateInputError(EnhanceError, ValueError):
    exit_code = 4


class RangeError(EnhanceError, ArithmeticError):
    exit_code = 4


class NoiseTooShortError(EnhanceError, ValueError):
    exit_code = 4
