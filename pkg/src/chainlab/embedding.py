"""The hidden token embedding matrix grounding the synthetic language,
plus the CILE binary format used for all dense matrices and tensors."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .seeds import SeedSpec, rng_for

CILE_MAGIC = b"CILE"
CILE_VERSION_MATRIX = 1
CILE_VERSION_TENSOR = 2


class CileFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DataEmbedding:
    """A |V| x d matrix; row v is the embedding of token v."""

    vocab_size: int
    dim: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.vocab_size, self.dim):
            raise ValueError(
                f"embedding shape {self.values.shape} != "
                f"({self.vocab_size}, {self.dim})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite entries")


def sample_data_embedding(
    vocab_size: int,
    dim: int,
    seed: SeedSpec,
    scale: float = 1.0,
) -> DataEmbedding:
    """Sample a |V| x d matrix of i.i.d. N(0, scale^2) entries.

    Computed in float64; deterministic given the seed spec.
    """
    if vocab_size < 1 or dim < 1:
        raise ValueError("vocab_size and dim must be positive")
    rng = rng_for(seed, 0)
    values = rng.standard_normal((vocab_size, dim)) * scale
    return DataEmbedding(vocab_size=vocab_size, dim=dim, values=values)


def write_cile_matrix(path, matrix: np.ndarray) -> None:
    """Write a 2-D array as CILE v1: magic, u16 version, u32 rows, u32 cols,
    then rows*cols float32 little-endian row-major."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError("write_cile_matrix requires a 2-D array")
    with open(path, "wb") as f:
        f.write(CILE_MAGIC)
        f.write(struct.pack("<HII", CILE_VERSION_MATRIX, m.shape[0], m.shape[1]))
        f.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def write_cile_tensor(path, tensor: np.ndarray) -> None:
    """Write an N-D array as CILE v2: magic, u16 version, u32 ndims,
    then ndims u32 dims, then float32 LE data in C order."""
    t = np.asarray(tensor)
    with open(path, "wb") as f:
        f.write(CILE_MAGIC)
        f.write(struct.pack("<HI", CILE_VERSION_TENSOR, t.ndim))
        f.write(struct.pack(f"<{t.ndim}I", *t.shape))
        f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_cile(path) -> np.ndarray:
    """Read either CILE layout; returns float32 array."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CILE_MAGIC:
        raise CileFormatError(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version == CILE_VERSION_MATRIX:
        rows, cols = struct.unpack_from("<II", data, 6)
        shape = (rows, cols)
        offset = 14
    elif version == CILE_VERSION_TENSOR:
        (ndim,) = struct.unpack_from("<I", data, 6)
        shape = struct.unpack_from(f"<{ndim}I", data, 10)
        offset = 10 + 4 * ndim
    else:
        raise CileFormatError(f"{path}: unsupported version {version}")
    n = int(np.prod(shape, dtype=np.int64))
    expected = offset + 4 * n
    if len(data) != expected:
        raise CileFormatError(
            f"{path}: truncated or oversized file "
            f"(got {len(data)} bytes, expected {expected})"
        )
    return np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(shape)
