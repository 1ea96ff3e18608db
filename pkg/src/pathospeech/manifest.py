"""Corpus manifest: utterance records, split discipline, summaries.

A manifest is a UTF-8 CSV with the exact header
``utt_id,speaker_id,label,split,path,duration_s``. Paths are resolved
against an optional root directory. Manifests are immutable after load
and safe to share between workers.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError, SpeakerOverlapError

log = logging.getLogger(__name__)

LABELS = ("healthy", "pathological")
SPLITS = ("train", "test")
MANIFEST_HEADER = ("utt_id", "speaker_id", "label", "split", "path", "duration_s")


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    speaker_id: str
    label: str
    split: str
    path: str
    duration_s: float


@dataclass(frozen=True)
class Manifest:
    records: tuple[UtteranceRecord, ...]
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.records)

    def split_records(self, split: str) -> list[UtteranceRecord]:
        return [r for r in self.records if r.split == split]

    def speakers(self, split: str) -> set[str]:
        return {r.speaker_id for r in self.records if r.split == split}

    def resolve_path(self, record: UtteranceRecord) -> Path:
        p = Path(record.path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p


@dataclass(frozen=True)
class SplitStats:
    n_utterances: int
    n_speakers: int
    label_counts: dict[str, int]
    total_duration_s: float
    # None when the split is empty (mean undefined).
    mean_duration_per_speaker_s: float | None
    majority_fraction: float | None


SplitSummary = dict[str, SplitStats]


def _parse_row(row: dict[str, str], line_no: int) -> UtteranceRecord:
    for key in MANIFEST_HEADER:
        if row.get(key) is None:
            raise ManifestError(f"line {line_no}: missing field {key!r}")
    if row["label"] not in LABELS:
        raise ManifestError(
            f"line {line_no}: label {row['label']!r} not in {LABELS}"
        )
    if row["split"] not in SPLITS:
        raise ManifestError(
            f"line {line_no}: split {row['split']!r} not in {SPLITS}"
        )
    try:
        duration = float(row["duration_s"])
    except ValueError as exc:
        raise ManifestError(
            f"line {line_no}: duration_s {row['duration_s']!r} is not a number"
        ) from exc
    if duration < 0:
        raise ManifestError(f"line {line_no}: duration_s must be >= 0")
    if not row["utt_id"] or not row["speaker_id"]:
        raise ManifestError(f"line {line_no}: empty utt_id or speaker_id")
    return UtteranceRecord(
        utt_id=row["utt_id"],
        speaker_id=row["speaker_id"],
        label=row["label"],
        split=row["split"],
        path=row["path"],
        duration_s=duration,
    )


def load_manifest(path: str | Path, root: str | Path | None = None) -> Manifest:
    """Load and validate a manifest CSV.

    Raises ManifestError on parse problems (with the offending line
    number), on duplicate utt_ids, and SpeakerOverlapError when a
    speaker occurs in both splits. Row order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")

    records: list[UtteranceRecord] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: header must be exactly {','.join(MANIFEST_HEADER)}"
            )
        for line_no, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != len(MANIFEST_HEADER):
                raise ManifestError(
                    f"line {line_no}: expected {len(MANIFEST_HEADER)} fields, "
                    f"got {len(raw)}"
                )
            records.append(_parse_row(dict(zip(MANIFEST_HEADER, raw)), line_no))

    seen: dict[str, int] = {}
    for i, rec in enumerate(records):
        if rec.utt_id in seen:
            raise ManifestError(
                f"duplicate utt_id {rec.utt_id!r} "
                f"(lines {seen[rec.utt_id] + 2} and {i + 2})"
            )
        seen[rec.utt_id] = i

    manifest = Manifest(records=tuple(records), root=Path(root) if root else None)
    overlap = manifest.speakers("train") & manifest.speakers("test")
    if overlap:
        raise SpeakerOverlapError(
            "speakers present in both train and test splits: "
            + ", ".join(sorted(overlap))
        )

    for split in SPLITS:
        recs = manifest.split_records(split)
        if recs:
            labels_present = {r.label for r in recs}
            missing = set(LABELS) - labels_present
            if missing:
                log.warning(
                    "split %r has no %s utterances; detectors trained on it "
                    "will reject the manifest",
                    split,
                    "/".join(sorted(missing)),
                )
    return manifest


def write_manifest(path: str | Path, manifest: Manifest) -> None:
    """Write a manifest back to CSV with the canonical header."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in manifest.records:
            writer.writerow(
                [r.utt_id, r.speaker_id, r.label, r.split, r.path,
                 repr(float(r.duration_s))]
            )


def _split_stats(records: list[UtteranceRecord]) -> SplitStats:
    n = len(records)
    speakers = {r.speaker_id for r in records}
    label_counts = dict(Counter(r.label for r in records))
    total = float(sum(r.duration_s for r in records))
    if n == 0:
        return SplitStats(0, 0, {}, 0.0, None, None)
    mean_per_speaker = total / len(speakers)
    majority = max(label_counts.values()) / n
    return SplitStats(
        n_utterances=n,
        n_speakers=len(speakers),
        label_counts=label_counts,
        total_duration_s=total,
        mean_duration_per_speaker_s=mean_per_speaker,
        majority_fraction=majority,
    )


def summarize(manifest: Manifest) -> SplitSummary:
    """Descriptive statistics per split.

    The test split's majority_fraction is the accuracy a constant
    classifier would reach, i.e. the chance level of the task.
    """
    return {split: _split_stats(manifest.split_records(split)) for split in SPLITS}
