"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, ``DataError``
exits 2 and ``NumericError`` exits 3.
"""


class PathoSpeechError(Exception):
    """Base class for every error raised by this package."""


class DataError(PathoSpeechError):
    """Malformed or inconsistent input data (manifests, audio, archives)."""


class NumericError(PathoSpeechError):
    """Numerical failure inside an algorithm."""


class ManifestError(DataError):
    """Manifest file cannot be parsed or violates a record-level invariant."""


class SpeakerOverlapError(ManifestError):
    """A speaker occurs in both the train and the test split."""


class AudioDecodeError(DataError):
    """Audio file cannot be decoded as PCM16/float32 RIFF WAV."""


class SilentAudioError(DataError):
    """An all-zero buffer was passed where a signal is required."""


class ArchiveError(DataError):
    """Feature archive is malformed or carries unexpected metadata."""


class EmptyClassError(DataError):
    """A training set is missing one of the two classes."""


class EmptyFeatureError(DataError):
    """A feature matrix with zero frames reached a backend; the caller
    must exclude the utterance."""


class LevinsonError(NumericError):
    """Levinson-Durbin hit a non-positive-definite autocorrelation."""
