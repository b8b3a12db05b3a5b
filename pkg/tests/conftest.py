import numpy as np
import pytest
from scipy.special import expit

from chainlab import DagConfig, DatasetConfig, sample_data_embedding
from chainlab.processor import Activation
from chainlab.sequence import Regime


def make_config(**overrides) -> DatasetConfig:
    base = dict(
        vocab_size=64,
        dim=10,
        dag=DagConfig(4, 4, 2),
        n_examples=40,
        mlp_depth=1,
        activation=Activation.parse("leaky_relu"),
        n_sequences=100,
        cot=True,
        regime=Regime.INFINITE_PROCESSORS,
        master_seed=7,
    )
    base.update(overrides)
    return DatasetConfig(**base)


@pytest.fixture
def small_config():
    return make_config()


@pytest.fixture
def small_embedding(small_config):
    return sample_data_embedding(
        small_config.vocab_size, small_config.dim, small_config.stream("embed")
    )


def scalar_chain_token(weights, activation, parent_embeddings, embedding_values):
    """Independent scalar-loop oracle for the chain-token generation step.

    Mirrors the published recursion with explicit Python loops: apply each
    layer to each parent embedding (activation between layers only), average,
    activate once more, then pick the vocabulary row with the largest dot
    product, lowest index first.
    """
    d = len(embedding_values[0])
    m = len(parent_embeddings)
    feats = []
    for e in parent_embeddings:
        vec = list(e)
        for li, w in enumerate(weights):
            out = [sum(w[r][c] * vec[c] for c in range(d)) for r in range(d)]
            if li < len(weights) - 1:
                out = [activation_scalar(activation, v) for v in out]
            vec = out
        feats.append(vec)
    mean = [sum(f[j] for f in feats) / m for j in range(d)]
    h_act = [activation_scalar(activation, v) for v in mean]
    best_tok, best_score = 0, None
    for v, row in enumerate(embedding_values):
        score = sum(row[j] * h_act[j] for j in range(d))
        if best_score is None or score > best_score:
            best_tok, best_score = v, score
    return best_tok


def activation_scalar(activation: Activation, x: float) -> float:
    kind = activation.kind.value
    if kind == "relu":
        return max(x, 0.0)
    if kind == "silu":
        return x * expit(x)
    if kind == "leaky_relu":
        return x if x >= 0 else activation.leaky_slope * x
    return x
