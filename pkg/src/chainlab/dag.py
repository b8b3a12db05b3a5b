"""Causal parent structures: each of the C chain positions gets exactly M
parent positions among the N inputs and earlier chain tokens."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeds import SeedSpec, derive_seed


@dataclass(frozen=True)
class DagConfig:
    n_inputs: int
    n_parents: int
    chain_len: int

    def __post_init__(self):
        if self.n_inputs < 1 or self.chain_len < 1:
            raise ValueError("n_inputs and chain_len must be >= 1")
        if not (1 <= self.n_parents <= self.n_inputs):
            raise ValueError(
                f"n_parents must satisfy 1 <= M <= N "
                f"(got M={self.n_parents}, N={self.n_inputs})"
            )


@dataclass(frozen=True)
class CausalDag:
    """parents[c] is a sorted tuple of M distinct positions < N + c.

    Positions 0..N-1 are the inputs; position N+j is chain token j.
    """

    config: DagConfig
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        cfg = self.config
        if len(self.parents) != cfg.chain_len:
            raise ValueError("parents must have one entry per chain position")
        for c, ps in enumerate(self.parents):
            if len(ps) != cfg.n_parents or len(set(ps)) != cfg.n_parents:
                raise ValueError(f"parents[{c}] must be {cfg.n_parents} distinct positions")
            if any(not (0 <= p < cfg.n_inputs + c) for p in ps):
                raise ValueError(f"parents[{c}] out of topological range")
            if tuple(sorted(ps)) != ps:
                raise ValueError(f"parents[{c}] must be sorted ascending")


def sample_dag(config: DagConfig, seed: SeedSpec, index: int = 0) -> CausalDag:
    """Uniformly sample M parents without replacement for each chain position,
    among the N + c positions preceding it."""
    rng = np.random.default_rng(derive_seed(seed, index))
    parents = []
    for c in range(config.chain_len):
        avail = config.n_inputs + c
        picks = rng.choice(avail, size=config.n_parents, replace=False)
        parents.append(tuple(sorted(int(p) for p in picks)))
    return CausalDag(config=config, parents=tuple(parents))


def enumerate_dag_count(config: DagConfig) -> int:
    """Number of distinct structures: prod_c C(N+c, M). Exact (big-int)."""
    count = 1
    for c in range(config.chain_len):
        count *= math.comb(config.n_inputs + c, config.n_parents)
    return count
