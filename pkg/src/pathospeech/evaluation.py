"""Accuracy, equal error rate, and per-speaker breakdowns.

Score orientation is fixed across backends: higher = more pathological.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .manifest import LABELS

SCORES_HEADER = ("utt_id", "speaker_id", "label", "score", "prediction")


@dataclass(frozen=True)
class DetectionScore:
    """A single utterance-level decision: signed score plus label."""

    score: float
    label: str


@dataclass(frozen=True)
class ScoredUtterance:
    utt_id: str
    speaker_id: str
    label: str
    score: float
    predicted: str


@dataclass(frozen=True)
class ScoreSet:
    entries: tuple[ScoredUtterance, ...]

    def __post_init__(self) -> None:
        ids = [e.utt_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate utt_ids in score set")
        for e in self.entries:
            if e.label not in LABELS or e.predicted not in LABELS:
                raise DataError(f"unknown label on {e.utt_id}")

    def __len__(self) -> int:
        return len(self.entries)


def accuracy(scores: ScoreSet) -> float:
    if not scores.entries:
        raise DataError("accuracy of an empty score set is undefined")
    correct = sum(1 for e in scores.entries if e.predicted == e.label)
    return correct / len(scores.entries)


def eer(scores: ScoreSet) -> float:
    """Equal error rate with linear interpolation on the ROC steps.

    Thresholds sweep the sorted unique scores (plus a virtual point
    above the maximum); at threshold t, FAR is the fraction of healthy
    utterances scored >= t and FRR the fraction of pathological
    utterances scored < t. The EER is read off where FAR = FRR,
    interpolating between the two adjacent thresholds where the sign of
    FAR - FRR flips.
    """
    healthy = np.array([e.score for e in scores.entries if e.label == "healthy"])
    patho = np.array(
        [e.score for e in scores.entries if e.label == "pathological"]
    )
    if len(healthy) == 0 or len(patho) == 0:
        raise DataError("eer needs both classes present")

    thresholds = np.unique(np.concatenate([healthy, patho]))
    far = np.array([np.mean(healthy >= t) for t in thresholds])
    frr = np.array([np.mean(patho < t) for t in thresholds])
    # Virtual operating point above the maximum score: reject everything.
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)

    diff = far - frr  # non-increasing along the sweep
    for i in range(len(diff)):
        if diff[i] == 0.0:
            return float(far[i])
        if diff[i] > 0 and diff[i + 1] < 0:
            lam = diff[i] / (diff[i] - diff[i + 1])
            return float(far[i] + lam * (far[i + 1] - far[i]))
    raise AssertionError("FAR/FRR sweep produced no crossing")


@dataclass(frozen=True)
class SpeakerRow:
    speaker_id: str
    label: str
    n_utterances: int
    accuracy: float


@dataclass(frozen=True)
class PerSpeakerReport:
    rows: tuple[SpeakerRow, ...]
    # label -> (min, max, mean) over that class's speaker accuracies
    class_stats: dict[str, tuple[float, float, float]]


def per_speaker_accuracy(scores: ScoreSet) -> PerSpeakerReport:
    """Accuracy per speaker plus per-class min/max/mean rows."""
    if not scores.entries:
        raise DataError("per-speaker accuracy of an empty score set")
    by_speaker: dict[str, list[ScoredUtterance]] = {}
    for e in scores.entries:
        by_speaker.setdefault(e.speaker_id, []).append(e)

    rows = []
    for speaker in sorted(by_speaker):
        entries = by_speaker[speaker]
        labels = {e.label for e in entries}
        label = entries[0].label if len(labels) == 1 else "mixed"
        acc = sum(1 for e in entries if e.predicted == e.label) / len(entries)
        rows.append(SpeakerRow(speaker, label, len(entries), acc))

    class_stats = {}
    for label in LABELS:
        accs = [r.accuracy for r in rows if r.label == label]
        if accs:
            class_stats[label] = (min(accs), max(accs), sum(accs) / len(accs))
    return PerSpeakerReport(rows=tuple(rows), class_stats=class_stats)


def per_speaker_table(report: PerSpeakerReport) -> str:
    lines = [f"{'speaker':<20} {'class':<13} {'utts':>5} {'accuracy':>9}"]
    for r in report.rows:
        lines.append(
            f"{r.speaker_id:<20} {r.label:<13} {r.n_utterances:>5} "
            f"{r.accuracy:>8.1%}"
        )
    for label, (lo, hi, mean) in report.class_stats.items():
        lines.append(
            f"{label}: mean {mean:.1%}, range {lo:.1%} - {hi:.1%}"
        )
    return "\n".join(lines)


def write_scores(path: str | Path, scores: ScoreSet) -> None:
    """Write the scores CSV (utt_id,speaker_id,label,score,prediction)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_HEADER)
        for e in scores.entries:
            writer.writerow(
                [e.utt_id, e.speaker_id, e.label, repr(float(e.score)), e.predicted]
            )


def read_scores(path: str | Path) -> ScoreSet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"scores file not found: {path}")
    entries = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SCORES_HEADER:
            raise DataError(
                f"{path}: header must be exactly {','.join(SCORES_HEADER)}"
            )
        for line_no, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(SCORES_HEADER):
                raise DataError(f"{path}: line {line_no}: wrong field count")
            try:
                score = float(raw[3])
            except ValueError:
                raise DataError(
                    f"{path}: line {line_no}: score {raw[3]!r} is not a number"
                ) from None
            entries.append(
                ScoredUtterance(raw[0], raw[1], raw[2], score, raw[4])
            )
    return ScoreSet(entries=tuple(entries))


def evaluation_report(scores: ScoreSet) -> dict:
    """Metrics bundle serializable to JSON."""
    speaker_report = per_speaker_accuracy(scores)
    both_classes = len({e.label for e in scores.entries}) == 2
    return {
        "n_utterances": len(scores),
        "accuracy": accuracy(scores),
        "eer": eer(scores) if both_classes else None,
        "per_speaker": [
            {
                "speaker_id": r.speaker_id,
                "label": r.label,
                "n_utterances": r.n_utterances,
                "accuracy": r.accuracy,
            }
            for r in speaker_report.rows
        ],
        "class_stats": {
            label: {"min": lo, "max": hi, "mean": mean}
            for label, (lo, hi, mean) in speaker_report.class_stats.items()
        },
    }


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
