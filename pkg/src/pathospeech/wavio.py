"""RIFF WAV reading and writing (PCM16 and IEEE float32 only).

Found audio in any other codec must be transcoded to WAV upstream.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import AudioDecodeError

_PCM16_SCALE = 32768.0


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a WAV file into float64 samples in [-1, 1].

    Returns (samples, sample_rate). Samples keep the file's channel
    layout: 1-D for mono, (n, channels) for multi-channel.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise AudioDecodeError(f"audio file not found: {path}") from None
    except Exception as exc:
        raise AudioDecodeError(f"cannot decode {path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioDecodeError(
            f"{path}: unsupported sample format {data.dtype}; "
            "only PCM16 and IEEE float32 are accepted"
        )
    if samples.size == 0:
        raise AudioDecodeError(f"{path}: no samples")
    return samples, int(rate)


def write_wav(
    path: str | Path,
    samples: np.ndarray,
    sample_rate: int,
    encoding: str = "pcm16",
) -> None:
    """Write mono samples in [-1, 1] as PCM16 or float32 WAV."""
    samples = np.asarray(samples, dtype=np.float64)
    if encoding == "pcm16":
        clipped = np.clip(samples, -1.0, 32767.0 / _PCM16_SCALE)
        data = np.round(clipped * _PCM16_SCALE).astype(np.int16)
    elif encoding == "float32":
        data = samples.astype(np.float32)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    wavfile.write(Path(path), int(sample_rate), data)
