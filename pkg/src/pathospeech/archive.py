"""Binary feature-archive format (extension .psdf).

Little-endian layout:

    magic    4s   b"PSDF"
    version  u16  1
    kind     u16  0 spectrogram, 1 mfcc, 2 plp, 3 ltas, 4 pitch, 5 ppg
    rows     u32
    cols     u32
    rate     u32  sample rate, Hz
    hop_ms   f32
    frame_ms f32
    silence  u16  column index of the silence phone, 0xFFFF = none
    data     rows*cols f32, row-major
    names    optional trailing table: u16 count, then count x (u16 len, UTF-8)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ArchiveError
from .features import CODE_KINDS, KIND_CODES, FeatureMatrix

MAGIC = b"PSDF"
VERSION = 1
NO_SILENCE = 0xFFFF
_HEADER = struct.Struct("<4sHHIIIffH")


def write_archive(path: str | Path, features: FeatureMatrix) -> None:
    data = np.ascontiguousarray(features.data, dtype=np.float32)
    silence = features.silence_col if features.silence_col is not None else NO_SILENCE
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        KIND_CODES[features.kind],
        features.n_frames,
        features.n_dims,
        features.sample_rate,
        features.frame_hop_ms,
        features.frame_len_ms,
        silence,
    )
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
        if features.column_names is not None:
            fh.write(struct.pack("<H", len(features.column_names)))
            for name in features.column_names:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)


def read_archive(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ArchiveError(f"archive not found: {path}") from None
    if len(blob) < _HEADER.size:
        raise ArchiveError(f"{path}: truncated header")
    magic, version, kind_code, rows, cols, rate, hop_ms, frame_ms, silence = (
        _HEADER.unpack_from(blob)
    )
    if magic != MAGIC:
        raise ArchiveError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ArchiveError(f"{path}: unsupported version {version}")
    if kind_code not in CODE_KINDS:
        raise ArchiveError(f"{path}: unknown kind code {kind_code}")

    offset = _HEADER.size
    n_values = rows * cols
    end = offset + 4 * n_values
    if len(blob) < end:
        raise ArchiveError(f"{path}: truncated data ({rows}x{cols} expected)")
    data = np.frombuffer(blob, dtype="<f4", count=n_values, offset=offset)
    data = data.reshape(rows, cols).astype(np.float64)

    names: tuple[str, ...] | None = None
    if len(blob) > end:
        try:
            (count,) = struct.unpack_from("<H", blob, end)
            pos = end + 2
            collected = []
            for _ in range(count):
                (length,) = struct.unpack_from("<H", blob, pos)
                pos += 2
                collected.append(blob[pos : pos + length].decode("utf-8"))
                pos += length
            names = tuple(collected)
        except (struct.error, UnicodeDecodeError) as exc:
            raise ArchiveError(f"{path}: malformed name table: {exc}") from exc
        if len(names) != cols:
            raise ArchiveError(
                f"{path}: name table has {len(names)} entries for {cols} columns"
            )

    return FeatureMatrix(
        data=data,
        kind=CODE_KINDS[kind_code],
        frame_hop_ms=float(hop_ms),
        frame_len_ms=float(frame_ms),
        sample_rate=int(rate),
        column_names=names,
        silence_col=None if silence == NO_SILENCE else int(silence),
    )
