"""Spectrogram-ResNet detector with Grad-CAM mean class-activation maps.

Consumes spectrogram archives and manifests produced by the
pathospeech toolkit and emits scores CSVs its `eval` command accepts.
"""

__version__ = "0.1.0"

from .model import BlockSpec, ResNetSpec, SpectrogramResNet

__all__ = ["BlockSpec", "ResNetSpec", "SpectrogramResNet", "__version__"]
