"""Toy spectrogram corpora for the baseline tests."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from resnet_baseline.corpus import MANIFEST_HEADER, SpectrogramSet, load_manifest
from resnet_baseline.psdf import Archive, write_archive

FRAMES, BINS = 12, 24
SR = 16000


def toy_features(rng, label, n):
    """Separable classes: healthy lights up low bins, pathological high."""
    feats = rng.standard_normal((n, FRAMES, BINS)).astype(np.float32)
    band = BINS // 4
    if label == "healthy":
        feats[:, :, 2 : 2 + band] += 3.0
    else:
        feats[:, :, BINS - 2 - band : BINS - 2] += 3.0
    return feats


def toy_set(seed=0, n_per_class=4, prefix="s"):
    rng = np.random.default_rng(seed)
    utt_ids, speakers, labels, blocks = [], [], [], []
    for label in ("healthy", "pathological"):
        feats = toy_features(rng, label, n_per_class)
        for i in range(n_per_class):
            utt_ids.append(f"{prefix}_{label[:1]}{i}")
            speakers.append(f"{prefix}_{label[:1]}spk{i % 2}")
            labels.append(label)
        blocks.append(feats)
    return SpectrogramSet(
        utt_ids=utt_ids,
        speaker_ids=speakers,
        labels=labels,
        features=np.concatenate(blocks),
    )


def write_toy_corpus(root: Path, seed=0, n_train_per_class=8, n_test_per_class=4):
    """Archives + manifest + lengths sidecar on disk, core-toolkit style."""
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    lengths = {}
    for split, n_per_class in (("train", n_train_per_class),
                               ("test", n_test_per_class)):
        for label in ("healthy", "pathological"):
            feats = toy_features(rng, label, n_per_class)
            for i in range(n_per_class):
                utt_id = f"{split}_{label[:1]}{i}"
                speaker = f"{split}_{label[:1]}spk{i % 2}"
                write_archive(
                    root / f"{utt_id}.psdf",
                    Archive(
                        data=feats[i], kind="spectrogram", frame_hop_ms=10.0,
                        frame_len_ms=25.0, sample_rate=SR,
                    ),
                )
                lengths[utt_id] = FRAMES
                rows.append(
                    (utt_id, speaker, label, split, f"{utt_id}.psdf", 1.0)
                )
    (root / "lengths.json").write_text(json.dumps(lengths, indent=2) + "\n")
    manifest = root / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    return manifest


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toycorpus")
    manifest = write_toy_corpus(root)
    return manifest


@pytest.fixture(scope="session")
def trained_toy_model(toy_corpus):
    from resnet_baseline.corpus import load_split
    from resnet_baseline.model import ResNetSpec
    from resnet_baseline.training import train

    manifest = load_manifest(toy_corpus)
    data = load_split(manifest, toy_corpus.parent, "train")
    result = train(data, spec=ResNetSpec(epochs=12), seed=42)
    return result
