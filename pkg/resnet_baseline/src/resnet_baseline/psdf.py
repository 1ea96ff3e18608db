"""Reader/writer for the pathospeech feature-archive format (.psdf).

Implemented against the documented interface so this package stays
independent of the core toolkit's code. Little-endian layout: magic
"PSDF", u16 version=1, u16 kind code, u32 rows, u32 cols, u32
sample_rate, f32 hop_ms, f32 frame_ms, u16 silence_col (0xFFFF =
none), rows*cols f32 row-major, optional trailing name table.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"PSDF"
VERSION = 1
NO_SILENCE = 0xFFFF
KINDS = ("spectrogram", "mfcc", "plp", "ltas", "pitch", "ppg")
_HEADER = struct.Struct("<4sHHIIIffH")


class PsdfError(ValueError):
    pass


@dataclass
class Archive:
    data: np.ndarray  # (rows, cols) float32
    kind: str
    frame_hop_ms: float
    frame_len_ms: float
    sample_rate: int
    column_names: tuple[str, ...] | None = None
    silence_col: int | None = None


def read_archive(path: str | Path) -> Archive:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise PsdfError(f"{path}: truncated header")
    magic, version, kind_code, rows, cols, rate, hop_ms, frame_ms, silence = (
        _HEADER.unpack_from(blob)
    )
    if magic != MAGIC or version != VERSION:
        raise PsdfError(f"{path}: not a version-{VERSION} PSDF archive")
    if kind_code >= len(KINDS):
        raise PsdfError(f"{path}: unknown kind code {kind_code}")
    end = _HEADER.size + 4 * rows * cols
    if len(blob) < end:
        raise PsdfError(f"{path}: truncated data")
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    names = None
    if len(blob) > end:
        (count,) = struct.unpack_from("<H", blob, end)
        pos = end + 2
        collected = []
        for _ in range(count):
            (length,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            collected.append(blob[pos : pos + length].decode("utf-8"))
            pos += length
        names = tuple(collected)
    return Archive(
        data=data.reshape(rows, cols).copy(),
        kind=KINDS[kind_code],
        frame_hop_ms=float(hop_ms),
        frame_len_ms=float(frame_ms),
        sample_rate=int(rate),
        column_names=names,
        silence_col=None if silence == NO_SILENCE else int(silence),
    )


def write_archive(path: str | Path, archive: Archive) -> None:
    data = np.ascontiguousarray(archive.data, dtype=np.float32)
    silence = NO_SILENCE if archive.silence_col is None else archive.silence_col
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        KINDS.index(archive.kind),
        data.shape[0],
        data.shape[1],
        archive.sample_rate,
        archive.frame_hop_ms,
        archive.frame_len_ms,
        silence,
    )
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
        if archive.column_names is not None:
            fh.write(struct.pack("<H", len(archive.column_names)))
            for name in archive.column_names:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
