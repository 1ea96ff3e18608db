"""Classical explainability reports.

Two analyses: the per-phone mixture-mean difference between the two
class GMMs, and the LASSO coefficient report with adjacent-coefficient
cluster detection over the frequency axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .gmm import GmmModel
from .lasso import LassoModel

DIFFERENCE_CUTOFF = 0.005
MIN_CLUSTER_LEN = 2


@dataclass(frozen=True)
class PhoneDifference:
    phone: str
    p: float
    included: bool


@dataclass(frozen=True)
class PhoneDifferenceReport:
    """Entries sorted by |p| descending.

    p < 0 means the phone is less likely in pathological speech, i.e.
    those speakers have trouble producing it.
    """

    entries: tuple[PhoneDifference, ...]
    cutoff: float

    @property
    def included(self) -> tuple[PhoneDifference, ...]:
        return tuple(e for e in self.entries if e.included)

    def to_json(self) -> str:
        return json.dumps(
            {
                "cutoff": self.cutoff,
                "phones": [
                    {"phone": e.phone, "p": e.p, "included": e.included}
                    for e in self.entries
                ],
            },
            indent=2,
        )

    def to_text(self) -> str:
        lines = [f"{'phone':<12} {'p':>12}  included (|p| > {self.cutoff})"]
        for e in self.entries:
            lines.append(f"{e.phone:<12} {e.p:>+12.6f}  {'yes' if e.included else 'no'}")
        return "\n".join(lines)


def gmm_phone_difference(
    pathological: GmmModel,
    healthy: GmmModel,
    cutoff: float = DIFFERENCE_CUTOFF,
    phone_labels: Sequence[str] | None = None,
) -> PhoneDifferenceReport:
    """Signed per-phone scalar from differencing the two class models.

    Components of each model are sorted by descending weight, the
    pathological-minus-healthy mean difference is taken pairwise, and
    the per-phone average over components gives p. A phone is included
    when |p| exceeds the cutoff.
    """
    if pathological.feature_kind != healthy.feature_kind:
        raise DataError(
            f"feature kinds differ: {pathological.feature_kind!r} vs "
            f"{healthy.feature_kind!r}"
        )
    if pathological.feature_kind != "ppg":
        raise DataError("the difference model is defined over ppg-trained GMMs")
    if pathological.m != healthy.m:
        raise DataError(
            f"component counts differ: {pathological.m} vs {healthy.m}"
        )
    if pathological.dim != healthy.dim:
        raise DataError("model dimensionalities differ")

    if phone_labels is None:
        phone_labels = pathological.meta.get("column_names") or healthy.meta.get(
            "column_names"
        )
    if phone_labels is None:
        phone_labels = [f"phone_{k:02d}" for k in range(pathological.dim)]
    if len(phone_labels) != pathological.dim:
        raise DataError(
            f"{len(phone_labels)} phone labels for {pathological.dim} phones"
        )

    order_p = np.argsort(-pathological.weights, kind="stable")
    order_h = np.argsort(-healthy.weights, kind="stable")
    diff = pathological.means[order_p] - healthy.means[order_h]
    p = diff.mean(axis=0)

    entries = [
        PhoneDifference(phone=str(phone_labels[k]), p=float(p[k]),
                        included=bool(abs(p[k]) > cutoff))
        for k in range(len(p))
    ]
    entries.sort(key=lambda e: -abs(e.p))
    return PhoneDifferenceReport(entries=tuple(entries), cutoff=cutoff)


@dataclass(frozen=True)
class CoefficientEntry:
    index: int
    weight: float
    half: str  # "mean" or "std"
    bin: int
    freq_hz: float


@dataclass(frozen=True)
class CoefficientCluster:
    half: str
    sign: int
    start_index: int
    end_index: int
    freq_lo_hz: float
    freq_hi_hz: float


@dataclass(frozen=True)
class CoefficientReport:
    """Unstandardized LASSO weights with frequency annotations.

    Positive weights contribute toward the pathological class. Clusters
    are maximal runs of at least two adjacent same-sign nonzero
    coefficients within one half of the stacked LTAS vector.
    """

    entries: tuple[CoefficientEntry, ...]
    clusters: tuple[CoefficientCluster, ...]
    nfft: int
    sample_rate: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "nfft": self.nfft,
                "sample_rate": self.sample_rate,
                "coefficients": [
                    {
                        "index": e.index,
                        "weight": e.weight,
                        "half": e.half,
                        "bin": e.bin,
                        "freq_hz": e.freq_hz,
                    }
                    for e in self.entries
                ],
                "clusters": [
                    {
                        "half": c.half,
                        "sign": c.sign,
                        "start_index": c.start_index,
                        "end_index": c.end_index,
                        "freq_lo_hz": c.freq_lo_hz,
                        "freq_hi_hz": c.freq_hi_hz,
                    }
                    for c in self.clusters
                ],
            },
            indent=2,
        )

    def to_text(self) -> str:
        lines = [f"{'idx':>5} {'half':<5} {'freq_hz':>9} {'weight':>14}"]
        for e in self.entries:
            if e.weight != 0.0:
                lines.append(
                    f"{e.index:>5} {e.half:<5} {e.freq_hz:>9.1f} {e.weight:>+14.6g}"
                )
        lines.append("clusters (>= 2 adjacent same-sign nonzero coefficients):")
        if not self.clusters:
            lines.append("  none")
        for c in self.clusters:
            sign = "+" if c.sign > 0 else "-"
            lines.append(
                f"  {c.half} {sign} indices {c.start_index}-{c.end_index} "
                f"({c.freq_lo_hz:.0f}-{c.freq_hi_hz:.0f} Hz)"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["index,half,bin,freq_hz,weight"]
        for e in self.entries:
            lines.append(f"{e.index},{e.half},{e.bin},{e.freq_hz!r},{e.weight!r}")
        return "\n".join(lines) + "\n"


def _find_clusters(
    weights: np.ndarray, offset: int, half: str, bin_hz: float
) -> list[CoefficientCluster]:
    clusters = []
    run_start = None
    run_sign = 0
    signs = np.sign(weights)
    for i, s in enumerate(list(signs) + [0]):  # sentinel flushes the last run
        if s != 0 and s == run_sign:
            continue
        if run_start is not None and i - run_start >= MIN_CLUSTER_LEN:
            clusters.append(
                CoefficientCluster(
                    half=half,
                    sign=int(run_sign),
                    start_index=offset + run_start,
                    end_index=offset + i - 1,
                    freq_lo_hz=run_start * bin_hz,
                    freq_hi_hz=(i - 1) * bin_hz,
                )
            )
        run_start = i if s != 0 else None
        run_sign = int(s)
    return clusters


def lasso_coefficients(
    model: LassoModel, nfft: int, sample_rate: int
) -> CoefficientReport:
    """Map LASSO weights back to raw LTAS space and detect clusters."""
    if model.feature_kind != "ltas":
        raise DataError(
            f"coefficient analysis is defined for ltas models, got "
            f"{model.feature_kind!r}"
        )
    n_bins = nfft // 2 + 1
    if len(model.weights) != 2 * n_bins:
        raise DataError(
            f"model has {len(model.weights)} dims; ltas over nfft={nfft} "
            f"needs {2 * n_bins}"
        )
    unstd = model.weights / model.feature_scale
    bin_hz = sample_rate / nfft

    entries = []
    for i, w in enumerate(unstd):
        half = "mean" if i < n_bins else "std"
        b = i if i < n_bins else i - n_bins
        entries.append(
            CoefficientEntry(
                index=i, weight=float(w), half=half, bin=b, freq_hz=b * bin_hz
            )
        )
    clusters = _find_clusters(unstd[:n_bins], 0, "mean", bin_hz) + _find_clusters(
        unstd[n_bins:], n_bins, "std", bin_hz
    )
    return CoefficientReport(
        entries=tuple(entries),
        clusters=tuple(clusters),
        nfft=nfft,
        sample_rate=sample_rate,
    )


def write_report(path: str | Path, text: str) -> None:
    Path(path).write_text(text if text.endswith("\n") else text + "\n")
