"""Sequence and dataset assembly.

One generated sequence holds K examples. Within a sequence all examples
share one causal DAG and one tuple of C token processors; inputs are
sampled uniformly per example and chain tokens are produced recursively.
The flat token layout is either

  non-CoT:  x_1 .. x_N y_C              (N+1 tokens per example)
  CoT:      x_1 .. x_N y_1 .. y_C       (N+C tokens per example)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dag import CausalDag, DagConfig, sample_dag
from .embedding import DataEmbedding
from .processor import (
    Activation,
    TokenProcessor,
    generate_chain_tokens_batch,
    sample_processor,
)
from .seeds import SeedSpec, rng_for

STREAM_INPUTS = "inputs"
STREAM_DAG = "dag"
STREAM_DAG_FIXED = "dag_fixed"
STREAM_MLP = "mlp"
STREAM_MLP_FIXED = "mlp_fixed"
STREAM_MLP_POOL = "mlp_pool"
STREAM_POOL_PICK = "pool_pick"


class Regime(str, Enum):
    INFINITE_PROCESSORS = "infinite_processors"
    FIXED_PROCESSORS = "fixed_processors"
    FINITE_POOL = "finite_pool"
    FIXED_DAG = "fixed_dag"
    FIXED_DAG_AND_PROCESSORS = "fixed_dag_and_processors"

    @property
    def fixed_dag(self) -> bool:
        return self in (Regime.FIXED_DAG, Regime.FIXED_DAG_AND_PROCESSORS)

    @property
    def fixed_processors(self) -> bool:
        return self in (Regime.FIXED_PROCESSORS, Regime.FIXED_DAG_AND_PROCESSORS)


@dataclass(frozen=True)
class DatasetConfig:
    vocab_size: int
    dim: int
    dag: DagConfig
    n_examples: int
    mlp_depth: int
    activation: Activation
    n_sequences: int
    cot: bool
    regime: Regime = Regime.INFINITE_PROCESSORS
    pool_size: int | None = None
    master_seed: int = 0
    data_std: float = 1.0
    split: str = "train"

    def __post_init__(self):
        if min(self.vocab_size, self.dim, self.n_examples, self.mlp_depth,
               self.n_sequences) < 1:
            raise ValueError("all counts must be positive")
        if self.regime == Regime.FINITE_POOL:
            if self.pool_size is None or self.pool_size < 1:
                raise ValueError("finite_pool regime requires pool_size >= 1")
        elif self.pool_size is not None:
            raise ValueError("pool_size is only valid with the finite_pool regime")
        if self.data_std <= 0:
            raise ValueError("data_std must be positive")

    @property
    def example_len(self) -> int:
        n, c = self.dag.n_inputs, self.dag.chain_len
        return n + c if self.cot else n + 1

    @property
    def flat_len(self) -> int:
        return self.n_examples * self.example_len

    def stream(self, label: str) -> SeedSpec:
        """Dataset-level stream: identical across splits of one master seed.
        Used for the embedding and for regime-shared state, so train and
        eval datasets see the same language and the same fixed functions."""
        return SeedSpec(master_seed=self.master_seed, stream_label=label)

    def split_stream(self, label: str) -> SeedSpec:
        """Per-sequence stream: disjoint between splits, so an eval dataset
        gets fresh inputs, DAGs, and per-sequence processors."""
        return SeedSpec(master_seed=self.master_seed,
                        stream_label=f"{self.split}/{label}")


@dataclass(frozen=True)
class SequenceRecord:
    seq_index: int
    input_tokens: np.ndarray          # (K, N) int64
    chain_tokens: np.ndarray          # (K, C) int64
    dag: CausalDag
    processor_seeds: tuple[int, ...]  # C child seeds
    pool_index: int | None = None     # set under the finite-pool regime
    flat_tokens: np.ndarray = field(default=None)  # type: ignore[assignment]


@dataclass(frozen=True)
class SharedState:
    """Regime-level state shared by every sequence of a dataset."""

    dag: CausalDag | None = None
    processors: tuple[TokenProcessor, ...] | None = None
    pool: tuple[tuple[TokenProcessor, ...], ...] | None = None


def build_shared_state(config: DatasetConfig) -> SharedState:
    dag = None
    if config.regime.fixed_dag:
        dag = sample_dag(config.dag, config.stream(STREAM_DAG_FIXED), 0)
    procs = None
    if config.regime.fixed_processors:
        procs = tuple(
            sample_processor(config.mlp_depth, config.dim, config.activation,
                             config.stream(STREAM_MLP_FIXED), c)
            for c in range(config.dag.chain_len)
        )
    pool = None
    if config.regime == Regime.FINITE_POOL:
        c_len = config.dag.chain_len
        pool = tuple(
            tuple(
                sample_processor(config.mlp_depth, config.dim, config.activation,
                                 config.stream(STREAM_MLP_POOL), p * c_len + c)
                for c in range(c_len)
            )
            for p in range(config.pool_size)
        )
    return SharedState(dag=dag, processors=procs, pool=pool)


def _flatten(config: DatasetConfig, inputs: np.ndarray, chains: np.ndarray) -> np.ndarray:
    if config.cot:
        per_example = np.concatenate([inputs, chains], axis=1)
    else:
        per_example = np.concatenate([inputs, chains[:, -1:]], axis=1)
    return per_example.reshape(-1)


def processor_from_seed(
    seed: int, depth: int, dim: int, activation: Activation
) -> TokenProcessor:
    """Rebuild a processor from the child seed recorded in a dataset."""
    rng = np.random.default_rng(seed)
    weights = tuple(rng.standard_normal((dim, dim)) for _ in range(depth))
    return TokenProcessor(depth=depth, dim=dim, weights=weights,
                          activation=activation, seed=seed)


def compute_chain_tokens(
    dag: CausalDag,
    processors: tuple[TokenProcessor, ...],
    input_tokens: np.ndarray,
    embedding: DataEmbedding,
) -> np.ndarray:
    """Run the recursive generation for all K examples of a sequence.

    Parent positions < N resolve to the example's inputs; position N+j
    resolves to its j-th already-generated chain token.
    """
    n = dag.config.n_inputs
    k = input_tokens.shape[0]
    all_tokens = np.empty((k, n + dag.config.chain_len), dtype=np.int64)
    all_tokens[:, :n] = input_tokens
    for c, parents in enumerate(dag.parents):
        parent_tokens = all_tokens[:, list(parents)]          # (K, M)
        parent_embs = embedding.values[parent_tokens]         # (K, M, d)
        all_tokens[:, n + c] = generate_chain_tokens_batch(
            processors[c], parent_embs, embedding
        )
    return all_tokens[:, n:]


def generate_sequence(
    config: DatasetConfig,
    seq_index: int,
    embedding: DataEmbedding,
    shared: SharedState | None = None,
) -> SequenceRecord:
    if embedding.vocab_size != config.vocab_size or embedding.dim != config.dim:
        raise ValueError("embedding shape does not match dataset config")
    if shared is None:
        shared = build_shared_state(config)
    if config.regime.fixed_dag and shared.dag is None:
        raise ValueError("fixed-DAG regime requires a shared DAG")
    if config.regime.fixed_processors and shared.processors is None:
        raise ValueError("fixed-processor regime requires shared processors")
    if config.regime == Regime.FINITE_POOL and shared.pool is None:
        raise ValueError("finite-pool regime requires a shared pool")

    rng = rng_for(config.split_stream(STREAM_INPUTS), seq_index)
    inputs = rng.integers(
        0, config.vocab_size, size=(config.n_examples, config.dag.n_inputs),
        dtype=np.int64,
    )

    dag = shared.dag if shared.dag is not None else sample_dag(
        config.dag, config.split_stream(STREAM_DAG), seq_index
    )

    pool_index = None
    if config.regime == Regime.FINITE_POOL:
        pick_rng = rng_for(config.split_stream(STREAM_POOL_PICK), seq_index)
        pool_index = int(pick_rng.integers(0, config.pool_size))
        processors = shared.pool[pool_index]
    elif shared.processors is not None:
        processors = shared.processors
    else:
        c_len = config.dag.chain_len
        processors = tuple(
            sample_processor(config.mlp_depth, config.dim, config.activation,
                             config.split_stream(STREAM_MLP), seq_index * c_len + c)
            for c in range(c_len)
        )

    chains = compute_chain_tokens(dag, processors, inputs, embedding)
    return SequenceRecord(
        seq_index=seq_index,
        input_tokens=inputs,
        chain_tokens=chains,
        dag=dag,
        processor_seeds=tuple(p.seed for p in processors),
        pool_index=pool_index,
        flat_tokens=_flatten(config, inputs, chains),
    )


def generate_dataset(config: DatasetConfig, embedding: DataEmbedding):
    """Yield the T sequence records in index order. Each record depends only
    on (master_seed, index) and the shared regime state, so any subset can
    be regenerated independently."""
    shared = build_shared_state(config)
    for i in range(config.n_sequences):
        yield generate_sequence(config, i, embedding, shared)


def regenerate_chain_tokens(
    record: SequenceRecord,
    config: DatasetConfig,
    embedding: DataEmbedding,
) -> np.ndarray:
    """Recompute a record's chain tokens from its stored metadata."""
    processors = tuple(
        processor_from_seed(seed, config.mlp_depth, config.dim, config.activation)
        for seed in record.processor_seeds
    )
    return compute_chain_tokens(record.dag, processors, record.input_tokens, embedding)


def build_eval_prompt(record: SequenceRecord, config: DatasetConfig, cot: bool):
    """Split a record into (prefix of K-1 examples, query inputs, true chain)."""
    k = config.n_examples
    if k < 2:
        raise ValueError("need at least 2 examples to form an eval prompt")
    n = config.dag.n_inputs
    c = config.dag.chain_len
    example_len = n + c if cot else n + 1
    if cot:
        per_example = np.concatenate([record.input_tokens, record.chain_tokens], axis=1)
    else:
        per_example = np.concatenate(
            [record.input_tokens, record.chain_tokens[:, -1:]], axis=1
        )
    prefix = per_example[: k - 1].reshape(-1)
    assert prefix.shape[0] == (k - 1) * example_len
    query = record.input_tokens[k - 1]
    truth = record.chain_tokens[k - 1]
    return prefix, query, truth
