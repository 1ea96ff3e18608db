"""Manifest and scores-CSV interop with the core toolkit, plus archive
loading for the network."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .psdf import read_archive

MANIFEST_HEADER = ("utt_id", "speaker_id", "label", "split", "path", "duration_s")
SCORES_HEADER = ("utt_id", "speaker_id", "label", "score", "prediction")
LABELS = ("healthy", "pathological")
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker_id: str
    label: str
    split: str
    path: str


def load_manifest(path: str | Path) -> list[Utterance]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader))
        if header != MANIFEST_HEADER:
            raise ValueError(f"{path}: unexpected manifest header {header}")
        out = []
        for raw in reader:
            if not raw:
                continue
            utt_id, speaker, label, split, rel_path, _duration = raw
            if label not in LABELS:
                raise ValueError(f"{path}: unknown label {label!r}")
            out.append(Utterance(utt_id, speaker, label, split, rel_path))
    return out


def write_scores(path: str | Path, rows: list[tuple[str, str, str, float, str]]) -> None:
    """rows: (utt_id, speaker_id, label, score, prediction); score is
    oriented higher = more pathological, matching the core toolkit."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_HEADER)
        for utt_id, speaker, label, score, prediction in rows:
            writer.writerow([utt_id, speaker, label, repr(float(score)), prediction])


@dataclass
class SpectrogramSet:
    """Stacked padded spectrograms for one manifest split."""

    utt_ids: list[str]
    speaker_ids: list[str]
    labels: list[str]
    features: np.ndarray  # (n, frames, bins) float32


def load_split(
    manifest: list[Utterance],
    archive_dir: str | Path,
    split: str,
) -> SpectrogramSet:
    """Load the padded spectrogram archives of one split.

    Archives must all share one frame count; when a lengths.json
    sidecar is present the common count must equal its maximum
    (padding contract of the exporter)."""
    archive_dir = Path(archive_dir)
    records = [u for u in manifest if u.split == split]
    if not records:
        raise ValueError(f"no {split!r} utterances in manifest")

    sidecar = archive_dir / "lengths.json"
    expected = None
    if sidecar.exists():
        lengths = json.loads(sidecar.read_text())
        if lengths:
            expected = max(lengths.values())

    mats = []
    for rec in records:
        archive = read_archive(archive_dir / f"{rec.utt_id}.psdf")
        if archive.kind != "spectrogram":
            raise ValueError(f"{rec.utt_id}: expected spectrogram, got {archive.kind}")
        mats.append(archive.data)
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(
            f"{split} archives are not padded to a common shape: {sorted(shapes)}"
        )
    rows = mats[0].shape[0]
    if expected is not None and rows != expected:
        raise ValueError(
            f"{split} archives have {rows} frames but the sidecar says the "
            f"corpus maximum is {expected}"
        )
    return SpectrogramSet(
        utt_ids=[r.utt_id for r in records],
        speaker_ids=[r.speaker_id for r in records],
        labels=[r.label for r in records],
        features=np.stack(mats).astype(np.float32),
    )
