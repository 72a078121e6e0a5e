"""EMB1 embedding matrix storage and moment statistics.

EMB1 is a deliberately simple binary layout:

    offset 0   magic  b"EMB1"
    offset 4   rows   uint32 little-endian
    offset 8   dim    uint32 little-endian
    offset 12  reserved, 4 zero bytes (pads the header to 16)
    offset 16  rows*dim IEEE-754 float32 little-endian, row-major

Files round-trip bit-exactly; non-finite values are rejected on both
load and save.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, EmptyMatrix, NonFiniteValue, SizeMismatch

MAGIC = b"EMB1"
HEADER_SIZE = 16


def emb1_file_size(rows: int, dim: int) -> int:
    return HEADER_SIZE + rows * dim * 4


@dataclass(frozen=True)
class EmbeddingMatrix:
    """A |V| x d float32 matrix; row i is the embedding of token id i."""

    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise SizeMismatch(f"expected a 2-D matrix, got shape {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise NonFiniteValue(f"matrix {self.label!r} contains NaN/Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EmbeddingStats:
    """Per-dimension and scalar moments of an embedding matrix.

    Variances are population variances (denominator = rows).
    """

    mean: np.ndarray
    variance: np.ndarray
    scalar_mean: float
    scalar_variance: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "scalar_mean": self.scalar_mean,
            "scalar_variance": self.scalar_variance,
        }


def save_matrix(matrix: EmbeddingMatrix, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", matrix.rows, matrix.dim))
        fh.write(b"\x00\x00\x00\x00")
        fh.write(matrix.data.astype("<f4", copy=False).tobytes())


def load_matrix(path: str, label: str = "") -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE or header[:4] != MAGIC:
            raise BadMagic(f"{path}: not an EMB1 file")
        rows, dim = struct.unpack("<II", header[4:12])
        payload = fh.read()
    expected = rows * dim * 4
    if len(payload) != expected:
        raise SizeMismatch(
            f"{path}: header claims {rows}x{dim} ({expected} bytes), "
            f"payload has {len(payload)} bytes"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return EmbeddingMatrix(data, label=label or path)


def stats(matrix: EmbeddingMatrix) -> EmbeddingStats:
    """Compute mean/variance per dimension and over all entries."""
    if matrix.rows == 0:
        raise EmptyMatrix("stats requires at least one row")
    data = matrix.data.astype(np.float64)
    return EmbeddingStats(
        mean=data.mean(axis=0),
        variance=data.var(axis=0),
        scalar_mean=float(data.mean()),
        scalar_variance=float(data.var()),
    )
