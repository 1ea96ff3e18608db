"""The feature matrix interchange type shared by frontends and backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

FEATURE_KINDS = ("spectrogram", "mfcc", "plp", "ltas", "pitch", "ppg")
KIND_CODES = {kind: code for code, kind in enumerate(FEATURE_KINDS)}
CODE_KINDS = {code: kind for kind, code in KIND_CODES.items()}


@dataclass
class FeatureMatrix:
    """frames x dims matrix tagged with its kind and frame timing.

    data is float64 in memory; archives store float32.
    """

    data: np.ndarray
    kind: str
    frame_hop_ms: float
    frame_len_ms: float
    sample_rate: int
    column_names: tuple[str, ...] | None = None
    silence_col: int | None = None

    def __post_init__(self) -> None:
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if self.kind not in KIND_CODES:
            raise DataError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(self.data)):
            raise DataError(f"{self.kind} features contain non-finite entries")
        if self.column_names is not None:
            self.column_names = tuple(self.column_names)
            if len(self.column_names) != self.n_dims:
                raise DataError(
                    f"{len(self.column_names)} column names for "
                    f"{self.n_dims} dims"
                )

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_dims(self) -> int:
        return self.data.shape[1]
