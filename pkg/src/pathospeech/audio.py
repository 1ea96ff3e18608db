"""Audio preparation chain: downmix, resample, peak-normalize, chunk, VAD.

All operations are pure functions of their inputs; utterance-level
parallelism is safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy import signal

from .errors import DataError, SilentAudioError
from .features import FeatureMatrix

# Log-energy floor applied to frame power before taking logs.
POWER_FLOOR = 1e-10

# VAD energies are computed on int16-range samples; the Kaldi-style
# threshold defaults assume that domain, not [-1, 1] audio.
VAD_SAMPLE_SCALE = 32768.0

# Resampler design: windowed-sinc polyphase, Kaiser window.
_KAISER_BETA = 8.6
_TAPS_PER_PHASE = 64


@dataclass(frozen=True)
class AudioBuffer:
    """Mono samples (float64, nominally within [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "samples", np.asarray(self.samples, dtype=np.float64)
        )
        if self.samples.ndim != 1:
            raise DataError("AudioBuffer samples must be 1-D (mono)")
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class VadDecision:
    """Per-frame speech flags from energy thresholding."""

    frame_flags: np.ndarray
    frame_hop_ms: float
    energy_threshold: float

    @property
    def n_speech(self) -> int:
        return int(np.count_nonzero(self.frame_flags))


def downmix(samples: np.ndarray, sample_rate: int) -> AudioBuffer:
    """Average channels to mono. 1-D input passes through unchanged."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DataError("cannot downmix an empty buffer")
    if samples.ndim == 1:
        return AudioBuffer(samples, sample_rate)
    if samples.ndim != 2:
        raise DataError(f"expected (n, channels) samples, got shape {samples.shape}")
    return AudioBuffer(samples.mean(axis=1), sample_rate)


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase rational resampling (Kaiser-windowed sinc).

    Identity when the rates already match. Output length is
    ceil(n * target / source), within one sample of the rounded ratio.
    """
    if target_rate <= 0:
        raise DataError("target sample rate must be positive")
    source_rate = buffer.sample_rate
    if target_rate == source_rate:
        return AudioBuffer(buffer.samples.copy(), source_rate)

    g = gcd(source_rate, target_rate)
    up, down = target_rate // g, source_rate // g
    # Unity-gain lowpass at the upsampled rate; resample_poly applies the
    # up-factor gain itself.
    h = signal.firwin(
        _TAPS_PER_PHASE * up + 1,
        min(source_rate, target_rate) / 2.0,
        fs=up * source_rate,
        window=("kaiser", _KAISER_BETA),
    )
    out = signal.resample_poly(buffer.samples, up, down, window=h)
    return AudioBuffer(out, target_rate)


def normalize_peak(buffer: AudioBuffer, target_dbfs: float = -0.1) -> AudioBuffer:
    """Scale so the absolute peak sits at target_dbfs (0 dBFS = 1.0)."""
    peak = float(np.max(np.abs(buffer.samples))) if len(buffer) else 0.0
    if peak == 0.0:
        raise SilentAudioError("cannot peak-normalize an all-zero buffer")
    gain = 10.0 ** (target_dbfs / 20.0) / peak
    return AudioBuffer(buffer.samples * gain, buffer.sample_rate)


def chunk(
    buffer: AudioBuffer, chunk_s: float = 5.0, min_tail_s: float = 1.0
) -> list[AudioBuffer]:
    """Cut into consecutive non-overlapping chunks of chunk_s seconds.

    The final shorter tail is kept iff its duration is >= min_tail_s.
    """
    if chunk_s <= 0:
        raise DataError("chunk_s must be positive")
    sr = buffer.sample_rate
    chunk_len = int(round(chunk_s * sr))
    out: list[AudioBuffer] = []
    for start in range(0, len(buffer), chunk_len):
        piece = buffer.samples[start : start + chunk_len]
        if len(piece) < chunk_len and len(piece) / sr < min_tail_s:
            break
        out.append(AudioBuffer(piece.copy(), sr))
    return out


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    """Number of full frames: 1 + floor((n - frame) / hop), 0 if too short."""
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // hop


def frame_params(sample_rate: int, frame_ms: float, hop_ms: float) -> tuple[int, int]:
    frame_len = int(round(frame_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    if hop <= 0 or frame_len < hop:
        raise DataError("require frame_ms >= hop_ms > 0")
    return frame_len, hop


def vad(
    buffer: AudioBuffer,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
    energy_offset: float = 5.0,
    mean_scale: float = 0.5,
) -> VadDecision:
    """Energy-based voice activity detection.

    A frame is speech iff its log energy exceeds
    energy_offset + mean_scale * mean(log energy over all frames).
    Frame energy is the sum of squared int16-range samples (Kaldi's
    raw-energy convention, which the default offset assumes), floored
    at 1e-10 before the log.
    """
    frame_len, hop = frame_params(buffer.sample_rate, frame_ms, hop_ms)
    n_frames = frame_count(len(buffer), frame_len, hop)
    if n_frames == 0:
        raise DataError(
            f"buffer of {len(buffer)} samples is shorter than one "
            f"{frame_len}-sample frame"
        )
    frames = np.lib.stride_tricks.sliding_window_view(buffer.samples, frame_len)[
        ::hop
    ][:n_frames]
    energy = np.maximum(
        np.sum((VAD_SAMPLE_SCALE * frames) ** 2, axis=1), POWER_FLOOR
    )
    log_energy = np.log(energy)
    threshold = energy_offset + mean_scale * float(np.mean(log_energy))
    return VadDecision(
        frame_flags=log_energy > threshold,
        frame_hop_ms=hop_ms,
        energy_threshold=threshold,
    )


def apply_vad(features: FeatureMatrix, decision: VadDecision) -> FeatureMatrix:
    """Drop the rows flagged as non-speech, preserving order."""
    flags = np.asarray(decision.frame_flags, dtype=bool)
    if features.n_frames != len(flags):
        raise DataError(
            f"feature frames ({features.n_frames}) != VAD frames ({len(flags)})"
        )
    return FeatureMatrix(
        data=features.data[flags],
        kind=features.kind,
        frame_hop_ms=features.frame_hop_ms,
        frame_len_ms=features.frame_len_ms,
        sample_rate=features.sample_rate,
        column_names=features.column_names,
        silence_col=features.silence_col,
    )
