"""Shared helpers for synthesizing audio and corpora in tests."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from pathospeech.audio import AudioBuffer
from pathospeech.manifest import MANIFEST_HEADER
from pathospeech.wavio import write_wav

SR = 16000


def sine(freq_hz: float, duration_s: float = 1.0, amplitude: float = 0.8,
         sample_rate: int = SR) -> AudioBuffer:
    t = np.arange(int(duration_s * sample_rate)) / sample_rate
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate)


def white_noise(duration_s: float = 1.0, amplitude: float = 0.1,
                sample_rate: int = SR, seed: int = 0) -> AudioBuffer:
    rng = np.random.default_rng(seed)
    n = int(duration_s * sample_rate)
    return AudioBuffer(amplitude * rng.standard_normal(n), sample_rate)


def speechlike(duration_s: float = 1.0, f0: float = 120.0, seed: int = 0,
               sample_rate: int = SR) -> AudioBuffer:
    """Pulse train through a crude resonator plus noise; enough structure
    for pitch/PLP tests without real recordings."""
    rng = np.random.default_rng(seed)
    n = int(duration_s * sample_rate)
    period = int(round(sample_rate / f0))
    excitation = np.zeros(n)
    excitation[::period] = 1.0
    # One-pole smoothing gives a decaying-harmonic source.
    signal = np.zeros(n)
    state = 0.0
    for i in range(n):
        state = 0.97 * state + excitation[i]
        signal[i] = state
    signal += 0.05 * rng.standard_normal(n)
    signal /= np.max(np.abs(signal))
    return AudioBuffer(0.7 * signal, sample_rate)


def write_manifest_csv(path: Path, rows: list[tuple]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    return path


def _tilted_noise(rng, n, tilt_db_per_octave, sample_rate=SR, f_lo=1000.0):
    """White noise whose spectrum is tilted above f_lo.

    The band below f_lo keeps unit-RMS white statistics identical for
    every tilt, and the tilted upper band is rescaled to its original
    total power. Classes then differ in spectral shape only, which
    keeps total noise power (and with it the NCCF voicing statistics)
    class-neutral while the per-bin tilt stays separable."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    band = freqs >= f_lo
    exponent = tilt_db_per_octave / (20.0 * np.log10(2.0))
    shape = (freqs[band] / f_lo) ** exponent
    power_before = float(np.sum(np.abs(spec[band]) ** 2))
    spec[band] *= shape
    power_after = float(np.sum(np.abs(spec[band]) ** 2))
    spec[band] *= np.sqrt(power_before / power_after)
    return np.fft.irfft(spec, n=n)


def _harmonic_voice(rng, n, f0, sample_rate=SR, max_hz=4000.0):
    """Unit-RMS band-limited harmonic stack; the shared 'voice' both
    classes carry so pitch features are uninformative."""
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    h = 1
    while h * f0 < max_hz:
        x += (1.0 / h) * np.sin(2.0 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
        h += 1
    return x / np.sqrt(np.mean(x**2))


def _tilt_pair(rng, n, tilt_db_per_octave, sample_rate=SR, f_lo=1000.0):
    """One white-noise realization rendered under both class tilts.

    Both outputs share the sub-f_lo band exactly and carry equal total
    power (the tilted band is rescaled to its pre-tilt power), so the
    pair differs only in upper-band spectral shape."""
    white = rng.standard_normal(n)
    spec0 = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    band = freqs >= f_lo
    power_before = float(np.sum(np.abs(spec0[band]) ** 2))
    out = []
    for sign in (+1.0, -1.0):
        spec = spec0.copy()
        shape = (freqs[band] / f_lo) ** (
            sign * tilt_db_per_octave / (20.0 * np.log10(2.0))
        )
        spec[band] *= shape
        spec[band] *= np.sqrt(power_before / np.sum(np.abs(spec[band]) ** 2))
        out.append(np.fft.irfft(spec, n=n))
    return out  # [pathological(+tilt), healthy(-tilt)]


def build_tilt_corpus(
    root: Path,
    n_train_pairs: int = 4,
    n_test_pairs: int = 3,
    utts_per_speaker: int = 3,
    duration_s: float = 1.0,
    seed: int = 0,
    tilt_db_per_octave: float = 6.0,
    noise_gain: float = 0.1,
    test_utts_per_speaker: int | None = None,
) -> Path:
    """Two synthetic classes differing only in the spectral tilt of
    their noise floor (+tilt pathological, -tilt healthy).

    Speakers are generated in matched pairs: a pathological speaker and
    a healthy speaker share identical voices and identical pre-tilt
    noise, so no class signal exists outside the tilt itself. Splits
    are speaker-disjoint. Returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(duration_s * SR)
    if test_utts_per_speaker is None:
        test_utts_per_speaker = utts_per_speaker
    rows = []
    for split, n_pairs, n_utts in (
        ("train", n_train_pairs, utts_per_speaker),
        ("test", n_test_pairs, test_utts_per_speaker),
    ):
        for i in range(n_pairs):
            f0_center = rng.uniform(130.0, 210.0)
            tilt = tilt_db_per_octave + rng.uniform(-0.5, 0.5)
            for u in range(n_utts):
                f0 = np.clip(rng.normal(f0_center, 35.0), 90.0, 320.0)
                voice = _harmonic_voice(rng, n, f0)
                patho_noise, healthy_noise = _tilt_pair(rng, n, tilt)
                for label, noise in (
                    ("pathological", patho_noise),
                    ("healthy", healthy_noise),
                ):
                    speaker = f"{split}_{label[:1]}spk{i:02d}"
                    x = voice + noise_gain * noise
                    x = x / np.max(np.abs(x)) * (10 ** (-0.005))
                    utt_id = f"{speaker}_u{u:02d}"
                    wav = f"{utt_id}.wav"
                    write_wav(root / wav, x, SR, encoding="float32")
                    rows.append((utt_id, speaker, label, split, wav, duration_s))
    return write_manifest_csv(root / "manifest.csv", rows)


@pytest.fixture
def tone_wav(tmp_path):
    path = tmp_path / "tone.wav"
    buf = sine(440.0, duration_s=2.0)
    write_wav(path, buf.samples, buf.sample_rate)
    return path


@pytest.fixture(scope="session")
def tilt_corpus_200(tmp_path_factory):
    """200-utterance paired-tilt corpus: 140 train (7 speaker pairs x 10
    utts) + 60 test (6 pairs x 5 utts), 1 s each. Built once per session."""
    root = tmp_path_factory.mktemp("tilt200")
    manifest = build_tilt_corpus(
        root,
        n_train_pairs=7,
        n_test_pairs=6,
        utts_per_speaker=10,
        test_utts_per_speaker=5,
        duration_s=1.0,
        seed=42,
    )
    return manifest


@pytest.fixture(scope="session")
def tilt_corpus_small(tmp_path_factory):
    """Tiny paired-tilt corpus for plumbing tests: 2 train pairs x 3 utts
    + 2 test pairs x 2 utts = 20 utterances."""
    root = tmp_path_factory.mktemp("tiltsmall")
    manifest = build_tilt_corpus(
        root,
        n_train_pairs=2,
        n_test_pairs=2,
        utts_per_speaker=3,
        test_utts_per_speaker=2,
        duration_s=1.0,
        seed=7,
    )
    return manifest
