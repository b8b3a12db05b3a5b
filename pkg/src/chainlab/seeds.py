"""Deterministic seed derivation for parallel data generation.

Every random quantity in the library is derived from a (master_seed,
stream_label, index) triple so that generation order and worker count
never affect the output.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SeedSpec:
    """A master seed plus a short ASCII stream label (e.g. "dag", "mlp")."""

    master_seed: int
    stream_label: str

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must fit in an unsigned 64-bit int")
        if not self.stream_label.isascii():
            raise ValueError("stream_label must be ASCII")


def derive_seed(spec: SeedSpec, index: int) -> int:
    """Derive a child seed from (master_seed, stream_label, index).

    Pure function: the same triple always yields the same 64-bit seed,
    independent of process, call order, or platform.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    h = hashlib.blake2b(digest_size=8)
    h.update(spec.master_seed.to_bytes(8, "little"))
    h.update(spec.stream_label.encode("ascii"))
    h.update(index.to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def rng_for(spec: SeedSpec, index: int) -> np.random.Generator:
    """A fresh numpy Generator seeded from the derived child seed."""
    return np.random.default_rng(derive_seed(spec, index))
