"""Matrix file formats: a framed binary format and plain CSV.

Binary layout (one frame)::

    bytes 0..3   magic "SSL1"
    bytes 4..11  row count, 64-bit little-endian unsigned
    bytes 12..19 column count, 64-bit little-endian unsigned
    then rows*cols IEEE-754 float64 values, little-endian, row-major

Frames can be concatenated in one file (checkpoints store several).
Binary round-trips are bit-exact. CSV files hold one matrix row per
line of comma-separated decimal floats, no header, UTF-8, '.' decimal
separator; values are written with shortest round-trip repr, so CSV
round-trips are exact for finite float64 as well.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .data import RelevancyMatrix, SimilarityMatrix
from .exceptions import RelevancyParseError
from .validation import as_float_matrix

MAGIC = b"SSL1"
_HEADER = struct.Struct("<4sQQ")


def write_matrix_frame(fh: BinaryIO, matrix: np.ndarray) -> None:
    arr = np.ascontiguousarray(matrix, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got shape {arr.shape}")
    fh.write(_HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]))
    fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_matrix_frame(fh: BinaryIO) -> np.ndarray:
    header = fh.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise RelevancyParseError(
            f"truncated header: expected {_HEADER.size} bytes, got {len(header)}"
        )
    magic, rows, cols = _HEADER.unpack(header)
    if magic != MAGIC:
        raise RelevancyParseError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    n_bytes = rows * cols * 8
    payload = fh.read(n_bytes)
    if len(payload) < n_bytes:
        raise RelevancyParseError(
            f"truncated payload: expected {n_bytes} bytes for a {rows}x{cols} "
            f"matrix, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_matrix(path, matrix: np.ndarray, fmt: str = "binary") -> None:
    """Write one matrix to ``path`` in the given format ('binary' or 'csv')."""
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            write_matrix_frame(fh, np.asarray(matrix))
    elif fmt == "csv":
        arr = as_float_matrix(matrix, "matrix")
        lines = [",".join(repr(float(v)) for v in row) for row in arr]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}, expected 'binary' or 'csv'")


def load_matrix(path, fmt: str = "binary") -> np.ndarray:
    """Read one matrix from ``path`` in the given format ('binary' or 'csv')."""
    path = Path(path)
    if fmt == "binary":
        with open(path, "rb") as fh:
            matrix = read_matrix_frame(fh)
            trailing = fh.read(1)
        if trailing:
            raise RelevancyParseError(f"{path} contains data past the first frame")
        return matrix
    if fmt == "csv":
        return _parse_csv(path.read_text(encoding="utf-8"), str(path))
    raise ValueError(f"unknown format {fmt!r}, expected 'binary' or 'csv'")


def _parse_csv(text: str, origin: str) -> np.ndarray:
    rows: list[list[float]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise RelevancyParseError(f"{origin}:{lineno}: {exc}") from exc
        if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
            raise RelevancyParseError(
                f"{origin}:{lineno}: row has {len(rows[-1])} columns, "
                f"expected {len(rows[0])}"
            )
    if not rows:
        raise RelevancyParseError(f"{origin}: file holds no matrix rows")
    return np.asarray(rows, dtype=np.float64)


def detect_format(path) -> str:
    """'csv' for .csv paths, 'binary' otherwise."""
    return "csv" if Path(path).suffix.lower() == ".csv" else "binary"


def load_relevancy(path, fmt: str | None = None) -> RelevancyMatrix:
    """Load and validate a relevancy matrix; entries outside [0, 1] are rejected."""
    fmt = fmt or detect_format(path)
    return RelevancyMatrix(load_matrix(path, fmt))


def save_relevancy(path, relevancy: RelevancyMatrix, fmt: str | None = None) -> None:
    fmt = fmt or detect_format(path)
    save_matrix(path, relevancy.data, fmt)


def load_similarity(path, fmt: str | None = None) -> SimilarityMatrix:
    fmt = fmt or detect_format(path)
    return SimilarityMatrix(load_matrix(path, fmt))


def save_similarity(path, similarity: SimilarityMatrix, fmt: str | None = None) -> None:
    fmt = fmt or detect_format(path)
    save_matrix(path, similarity.data, fmt)
