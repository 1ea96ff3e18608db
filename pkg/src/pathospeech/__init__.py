"""Pathological-speech detection toolkit.

Prepare found audio, extract acoustic features (spectrogram, MFCC, PLP,
LTAS, pitch, PPG), train GMM and LASSO detectors, evaluate with
accuracy/EER/per-speaker breakdowns, and emit explainability reports.
"""

__version__ = "0.1.0"

from .audio import AudioBuffer, VadDecision
from .features import FeatureMatrix
from .manifest import Manifest, UtteranceRecord

__all__ = [
    "AudioBuffer",
    "FeatureMatrix",
    "Manifest",
    "UtteranceRecord",
    "VadDecision",
    "__version__",
]
