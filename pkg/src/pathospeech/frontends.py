"""Acoustic frontends: spectrogram, MFCC, PLP, LTAS, pitch, PPG loading.

All frame-level frontends share the same framing (25 ms window, 10 ms
hop by default, edges snipped) so their frame counts agree for a given
buffer and so VAD flags computed with the same parameters line up.
Log floors keep every output finite for every finite input.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import scipy.fft

from .archive import read_archive
from .audio import POWER_FLOOR, AudioBuffer, frame_count, frame_params
from .errors import ArchiveError, DataError, LevinsonError
from .features import FeatureMatrix

log = logging.getLogger(__name__)

LOG_FLOOR = float(np.log(POWER_FLOOR))

# Voicing-probability threshold above which a frame counts as voiced.
VOICING_THRESHOLD = 0.5
# Fallback pitch for utterances that never produce a voiced frame.
FALLBACK_PITCH_HZ = 100.0

PPG_PHONES = 39


def _frames(buffer: AudioBuffer, frame_ms: float, hop_ms: float) -> np.ndarray:
    frame_len, hop = frame_params(buffer.sample_rate, frame_ms, hop_ms)
    n = frame_count(len(buffer), frame_len, hop)
    if n == 0:
        raise DataError(
            f"buffer of {len(buffer)} samples is shorter than one "
            f"{frame_len}-sample frame"
        )
    view = np.lib.stride_tricks.sliding_window_view(buffer.samples, frame_len)
    return view[::hop][:n].copy()


def _preemphasize(frames: np.ndarray, coeff: float) -> np.ndarray:
    # Per-frame pre-emphasis; the first sample is emphasized against
    # itself so frames are processed independently of their context.
    out = frames.copy()
    out[:, 1:] -= coeff * frames[:, :-1]
    out[:, 0] *= 1.0 - coeff
    return out


def _power_spectrum(
    frames: np.ndarray, nfft: int, preemphasis: float = 0.0
) -> np.ndarray:
    if nfft < frames.shape[1]:
        raise DataError(f"nfft={nfft} is smaller than the {frames.shape[1]}-sample frame")
    if preemphasis:
        frames = _preemphasize(frames, preemphasis)
    windowed = frames * np.hamming(frames.shape[1])
    return np.abs(np.fft.rfft(windowed, n=nfft, axis=1)) ** 2


def spectrogram(
    buffer: AudioBuffer,
    nfft: int = 512,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
) -> FeatureMatrix:
    """Log-power spectrogram, Hamming window, floored at log(1e-10)."""
    power = _power_spectrum(_frames(buffer, frame_ms, hop_ms), nfft)
    return FeatureMatrix(
        data=np.log(np.maximum(power, POWER_FLOOR)),
        kind="spectrogram",
        frame_hop_ms=hop_ms,
        frame_len_ms=frame_ms,
        sample_rate=buffer.sample_rate,
    )


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int, nfft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None
) -> np.ndarray:
    """Triangular mel filters evaluated at the FFT bin frequencies.

    Returns an (n_mels, nfft // 2 + 1) weight matrix. Triangles are
    unit-height, mel-spaced between fmin and fmax (default Nyquist).
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    bin_hz = np.arange(nfft // 2 + 1) * sample_rate / nfft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bank = np.zeros((n_mels, len(bin_hz)))
    for j in range(n_mels):
        lo, center, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        bank[j] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def dct_cepstra(log_energies: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Orthonormal DCT-II along the last axis, first n_coeffs kept."""
    return scipy.fft.dct(log_energies, type=2, norm="ortho", axis=-1)[..., :n_coeffs]


def mfcc(
    buffer: AudioBuffer,
    n_coeffs: int = 13,
    n_mels: int = 23,
    nfft: int = 512,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
    preemphasis: float = 0.97,
) -> FeatureMatrix:
    """Mel-frequency cepstral coefficients, C0 included.

    Per frame: pre-emphasis, Hamming window, power spectrum, mel
    filterbank, log (floored at 1e-10), orthonormal DCT-II, first
    n_coeffs coefficients kept.
    """
    power = _power_spectrum(_frames(buffer, frame_ms, hop_ms), nfft, preemphasis)
    bank = mel_filterbank(n_mels, nfft, buffer.sample_rate)
    log_mel = np.log(np.maximum(power @ bank.T, POWER_FLOOR))
    return FeatureMatrix(
        data=dct_cepstra(log_mel, n_coeffs),
        kind="mfcc",
        frame_hop_ms=hop_ms,
        frame_len_ms=frame_ms,
        sample_rate=buffer.sample_rate,
    )


def hz_to_bark(hz):
    z = np.asarray(hz, dtype=np.float64) / 600.0
    return 6.0 * np.log(z + np.sqrt(z * z + 1.0))


def bark_filterbank(
    n_bands: int, nfft: int, sample_rate: int
) -> tuple[np.ndarray, np.ndarray]:
    """Critical-band masking curves on the Bark scale.

    Band centers are spaced uniformly in Bark from 0 to the Nyquist
    Bark. Each curve is flat within +-0.5 Bark of its center, rises at
    25 dB/Bark below and falls at 10 dB/Bark above, truncated at -1.3
    and +2.5 Bark. Returns (weights (n_bands, nfft//2+1), center_hz).
    """
    bin_bark = hz_to_bark(np.arange(nfft // 2 + 1) * sample_rate / nfft)
    centers_bark = np.linspace(0.0, hz_to_bark(sample_rate / 2.0), n_bands)
    omega = bin_bark[np.newaxis, :] - centers_bark[:, np.newaxis]
    weights = np.zeros_like(omega)
    lower = (omega >= -1.3) & (omega <= -0.5)
    flat = (omega > -0.5) & (omega < 0.5)
    upper = (omega >= 0.5) & (omega <= 2.5)
    weights[lower] = 10.0 ** (2.5 * (omega[lower] + 0.5))
    weights[flat] = 1.0
    weights[upper] = 10.0 ** (-(omega[upper] - 0.5))
    centers_hz = 600.0 * np.sinh(centers_bark / 6.0)
    return weights, centers_hz


def equal_loudness(center_hz: np.ndarray) -> np.ndarray:
    """40-dB equal-loudness weighting at the given frequencies."""
    w2 = (2.0 * np.pi * np.asarray(center_hz, dtype=np.float64)) ** 2
    return ((w2 + 56.8e6) * w2**2) / ((w2 + 6.3e6) ** 2 * (w2 + 0.38e9))


def levinson(r: np.ndarray, order: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Levinson-Durbin recursion on autocorrelation r[0..order].

    Returns (a, error, reflections) with a[0] = 1 for the prediction
    polynomial A(z) = 1 + a[1] z^-1 + ... Raises LevinsonError when the
    autocorrelation is not positive definite.
    """
    if r[0] <= 0:
        raise LevinsonError("autocorrelation r[0] <= 0")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = float(r[0])
    refl = np.zeros(order)
    for i in range(1, order + 1):
        acc = r[i] + a[1:i] @ r[i - 1 : 0 : -1]
        k = -acc / err
        refl[i - 1] = k
        prev = a[: i + 1].copy()
        a[1 : i + 1] = prev[1 : i + 1] + k * prev[i - 1 :: -1][:i]
        err *= 1.0 - k * k
        if err <= 0:
            raise LevinsonError(
                f"prediction error became non-positive at order {i}"
            )
    return a, err, refl


def lpc_to_cepstra(a: np.ndarray, err: float, n_coeffs: int) -> np.ndarray:
    """Cepstra of the all-pole model power spectrum err / |A|^2.

    c[0] = ln(err); the remaining coefficients follow the standard
    recursion for the cepstrum of 1/A(z).
    """
    order = len(a) - 1
    c = np.zeros(n_coeffs)
    c[0] = np.log(err)
    for n in range(1, n_coeffs):
        an = a[n] if n <= order else 0.0
        acc = -an
        for k in range(1, n):
            ank = a[n - k] if n - k <= order else 0.0
            acc -= (k / n) * c[k] * ank
        c[n] = acc
    return c


def plp(
    buffer: AudioBuffer,
    model_order: int = 12,
    n_bands: int | None = None,
    nfft: int = 512,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
    preemphasis: float = 0.97,
    return_reflections: bool = False,
) -> FeatureMatrix | tuple[FeatureMatrix, np.ndarray]:
    """Perceptual linear prediction cepstra (model_order + 1 dims).

    Per frame: power spectrum, Bark critical-band integration,
    equal-loudness pre-emphasis, cube-root compression, inverse DFT to
    autocorrelation, Levinson-Durbin to model_order, LPC-to-cepstrum.
    Band energies are floored at 1e-10 so silent frames stay finite.

    With return_reflections=True also returns the (frames, model_order)
    reflection-coefficient array from the Levinson recursion.
    """
    power = _power_spectrum(_frames(buffer, frame_ms, hop_ms), nfft, preemphasis)
    nyquist_bark = float(hz_to_bark(buffer.sample_rate / 2.0))
    if n_bands is None:
        n_bands = int(np.ceil(nyquist_bark)) + 1
    bank, centers_hz = bark_filterbank(n_bands, nfft, buffer.sample_rate)
    band_energy = np.maximum(power @ bank.T, POWER_FLOOR)
    compressed = (band_energy * equal_loudness(centers_hz)) ** 0.33
    # Autocorrelation of the symmetric band spectrum.
    autocorr = np.fft.irfft(compressed, n=2 * (n_bands - 1), axis=1)

    cepstra = np.zeros((power.shape[0], model_order + 1))
    reflections = np.zeros((power.shape[0], model_order))
    for f in range(power.shape[0]):
        try:
            a, err, refl = levinson(autocorr[f], model_order)
        except LevinsonError as exc:
            raise LevinsonError(f"frame {f}: {exc}") from exc
        cepstra[f] = lpc_to_cepstra(a, err, model_order + 1)
        reflections[f] = refl

    fm = FeatureMatrix(
        data=cepstra,
        kind="plp",
        frame_hop_ms=hop_ms,
        frame_len_ms=frame_ms,
        sample_rate=buffer.sample_rate,
    )
    if return_reflections:
        return fm, reflections
    return fm


def ltas(spec: FeatureMatrix) -> FeatureMatrix:
    """Long-term average spectrum: per-bin mean and population standard
    deviation of a log-power spectrogram, stacked [mean || std] as a
    single row."""
    if spec.kind != "spectrogram":
        raise DataError(f"ltas expects a spectrogram, got {spec.kind!r}")
    if spec.n_frames < 2:
        raise DataError("ltas needs at least 2 frames for the deviation half")
    mean = spec.data.mean(axis=0)
    std = spec.data.std(axis=0)  # population convention (1/M)
    return FeatureMatrix(
        data=np.concatenate([mean, std])[np.newaxis, :],
        kind="ltas",
        frame_hop_ms=spec.frame_hop_ms,
        frame_len_ms=spec.frame_len_ms,
        sample_rate=spec.sample_rate,
    )


def ltas_halves(vector: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Split a stacked LTAS row back into its (mean, std) halves."""
    if vector.kind != "ltas":
        raise DataError(f"expected ltas features, got {vector.kind!r}")
    half = vector.n_dims // 2
    row = vector.data[0]
    return row[:half], row[half:]


def pitch(
    buffer: AudioBuffer,
    frame_ms: float = 25.0,
    hop_ms: float = 10.0,
    min_hz: float = 60.0,
    max_hz: float = 400.0,
) -> FeatureMatrix:
    """Pitch and voicing likelihood, 2 dims per frame.

    Column 0 is the voicing probability (peak normalized
    cross-correlation clipped to [0, 1]); column 1 is log pitch in Hz.
    The lag search covers sample_rate/max_hz .. sample_rate/min_hz with
    a small penalty on longer lags to suppress octave errors. Unvoiced
    frames repeat the last voiced pitch (log(100 Hz) before the first
    voiced frame). A zero-energy frame has NCCF 0 by definition.
    """
    sr = buffer.sample_rate
    frame_len, hop = frame_params(sr, frame_ms, hop_ms)
    n_frames = frame_count(len(buffer), frame_len, hop)
    if n_frames == 0:
        raise DataError(
            f"buffer of {len(buffer)} samples is shorter than one "
            f"{frame_len}-sample frame"
        )
    lag_min = int(np.floor(sr / max_hz))
    lag_max = int(np.ceil(sr / min_hz))

    # Each frame correlates its first frame_len samples against the
    # following lag_max samples; pad so the last frames see zeros.
    seg_len = frame_len + lag_max
    padded = np.concatenate([buffer.samples, np.zeros(seg_len)])
    starts = np.arange(n_frames) * hop
    segs = np.lib.stride_tricks.sliding_window_view(padded, seg_len)[starts]

    nfft = 1 << int(np.ceil(np.log2(seg_len + frame_len)))
    spec_seg = np.fft.rfft(segs, n=nfft, axis=1)
    spec_win = np.fft.rfft(segs[:, :frame_len], n=nfft, axis=1)
    corr = np.fft.irfft(spec_seg * np.conj(spec_win), n=nfft, axis=1)[
        :, : lag_max + 1
    ]

    # Energy of x[start+L : start+L+frame_len] per frame and lag.
    csum = np.concatenate(
        [np.zeros((n_frames, 1)), np.cumsum(segs**2, axis=1)], axis=1
    )
    lags = np.arange(lag_max + 1)
    e_lag = csum[:, lags + frame_len] - csum[:, lags]
    e0 = e_lag[:, 0][:, np.newaxis]
    denom = np.sqrt(e0 * e_lag)
    nccf = np.divide(corr, denom, out=np.zeros_like(corr), where=denom > 0)

    search = nccf[:, lag_min : lag_max + 1]
    penalty = 0.01 * (lags[lag_min:] - lag_min) / max(lag_max - lag_min, 1)
    best = np.argmax(search - penalty, axis=1)
    voicing = np.clip(search[np.arange(n_frames), best], 0.0, 1.0)
    best_lag = best + lag_min

    out = np.zeros((n_frames, 2))
    out[:, 0] = voicing
    last_log_pitch = float(np.log(FALLBACK_PITCH_HZ))
    for f in range(n_frames):
        if voicing[f] > VOICING_THRESHOLD:
            last_log_pitch = float(np.log(sr / best_lag[f]))
        out[f, 1] = last_log_pitch

    return FeatureMatrix(
        data=out,
        kind="pitch",
        frame_hop_ms=hop_ms,
        frame_len_ms=frame_ms,
        sample_rate=sr,
    )


def load_ppg(path: str | Path) -> FeatureMatrix:
    """Load a phonetic-posteriorgram archive and strip its silence phone.

    40-column archives must declare the silence column in their header;
    it is dropped and each row renormalized to sum 1. Rows whose
    remaining mass is ~0 (all-silence frames) are dropped and counted in
    a log message. 39-column archives are renormalized the same way.
    """
    fm = read_archive(path)
    if fm.kind != "ppg":
        raise ArchiveError(f"{path}: expected ppg archive, got {fm.kind!r}")
    if fm.n_dims not in (PPG_PHONES, PPG_PHONES + 1):
        raise ArchiveError(
            f"{path}: ppg archives must have 39 or 40 columns, got {fm.n_dims}"
        )
    if np.any(fm.data < -1e-6):
        raise ArchiveError(f"{path}: negative posterior entries")

    data = np.maximum(fm.data, 0.0)
    names = fm.column_names
    if fm.n_dims == PPG_PHONES + 1:
        if fm.silence_col is None or not 0 <= fm.silence_col < fm.n_dims:
            raise ArchiveError(
                f"{path}: 40-column archive must declare its silence column"
            )
        keep = np.arange(fm.n_dims) != fm.silence_col
        data = data[:, keep]
        if names is not None:
            names = tuple(n for i, n in enumerate(names) if keep[i])

    mass = data.sum(axis=1)
    valid = mass > 1e-8
    n_dropped = int(np.count_nonzero(~valid))
    if n_dropped:
        log.warning("%s: dropped %d all-silence frames", path, n_dropped)
    data = data[valid] / mass[valid][:, np.newaxis]

    return FeatureMatrix(
        data=data,
        kind="ppg",
        frame_hop_ms=fm.frame_hop_ms,
        frame_len_ms=fm.frame_len_ms,
        sample_rate=fm.sample_rate,
        column_names=names,
    )
