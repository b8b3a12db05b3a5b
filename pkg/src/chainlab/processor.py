"""Random MLP token processors: M parent embeddings in, one token id out.

An l-layer processor applies h(e) = W_l(phi(W_{l-1}(... phi(W_1 e)))) to
each parent embedding, averages the results, applies the activation once
more, and emits the vocabulary token whose embedding has the largest
inner product with that feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .embedding import DataEmbedding
from .seeds import SeedSpec, derive_seed


class ActivationKind(str, Enum):
    RELU = "relu"
    SILU = "silu"
    LEAKY_RELU = "leaky_relu"
    IDENTITY = "identity"


@dataclass(frozen=True)
class Activation:
    kind: ActivationKind
    leaky_slope: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.leaky_slope < 1.0):
            raise ValueError("leaky_slope must lie in (0, 1)")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == ActivationKind.RELU:
            return np.maximum(x, 0.0)
        if self.kind == ActivationKind.SILU:
            return x * expit(x)
        if self.kind == ActivationKind.LEAKY_RELU:
            return np.where(x >= 0.0, x, self.leaky_slope * x)
        return x

    @classmethod
    def parse(cls, name: str, leaky_slope: float = 0.01) -> "Activation":
        aliases = {
            "relu": ActivationKind.RELU,
            "silu": ActivationKind.SILU,
            "leakyrelu": ActivationKind.LEAKY_RELU,
            "leaky_relu": ActivationKind.LEAKY_RELU,
            "identity": ActivationKind.IDENTITY,
        }
        key = name.strip().lower()
        if key not in aliases:
            raise ValueError(f"unknown activation {name!r}")
        return cls(kind=aliases[key], leaky_slope=leaky_slope)


@dataclass(frozen=True)
class TokenProcessor:
    depth: int
    dim: int
    weights: tuple[np.ndarray, ...]
    activation: Activation
    seed: int = field(default=0)

    def __post_init__(self):
        if len(self.weights) != self.depth:
            raise ValueError("need exactly `depth` weight matrices")
        for w in self.weights:
            if w.shape != (self.dim, self.dim):
                raise ValueError("all weight matrices must be d x d")
            if not np.all(np.isfinite(w)):
                raise ValueError("weight matrix contains non-finite entries")

    def apply(self, x: np.ndarray) -> np.ndarray:
        """h(x) for a batch of row vectors (..., d). Activation between
        layers only; the final linear layer is left unactivated."""
        out = x
        for i, w in enumerate(self.weights):
            out = out @ w.T
            if i < self.depth - 1:
                out = self.activation(out)
        return out


def sample_processor(
    depth: int,
    dim: int,
    activation: Activation,
    seed: SeedSpec,
    index: int = 0,
) -> TokenProcessor:
    """Sample l matrices of i.i.d. standard-normal entries."""
    if depth < 1 or dim < 1:
        raise ValueError("depth and dim must be >= 1")
    child = derive_seed(seed, index)
    rng = np.random.default_rng(child)
    weights = tuple(rng.standard_normal((dim, dim)) for _ in range(depth))
    return TokenProcessor(
        depth=depth, dim=dim, weights=weights, activation=activation, seed=child
    )


def generate_chain_token(
    proc: TokenProcessor,
    parent_embeddings: np.ndarray,
    embedding: DataEmbedding,
) -> int:
    """Emit a token id: argmax_v <E[v], phi(mean_i h(e_i))>.

    Ties break toward the lowest token id. Computation is float64.
    """
    tokens = generate_chain_tokens_batch(proc, parent_embeddings[None, :, :], embedding)
    return int(tokens[0])


def generate_chain_tokens_batch(
    proc: TokenProcessor,
    parent_embeddings: np.ndarray,
    embedding: DataEmbedding,
) -> np.ndarray:
    """Vectorized path over a (B, M, d) batch of parent-embedding stacks."""
    pe = np.asarray(parent_embeddings, dtype=np.float64)
    if pe.ndim != 3 or pe.shape[2] != proc.dim:
        raise ValueError(f"expected (B, M, {proc.dim}) parent embeddings, got {pe.shape}")
    if embedding.dim != proc.dim:
        raise ValueError("embedding dim does not match processor dim")
    h = proc.apply(pe)                 # (B, M, d)
    h_mean = h.mean(axis=1)            # (B, d)
    h_act = proc.activation(h_mean)    # (B, d)
    if not np.all(np.isfinite(h_act)):
        raise FloatingPointError("non-finite features in token processor output")
    scores = h_act @ embedding.values.T  # (B, |V|)
    # np.argmax returns the first (lowest-id) maximizer.
    return np.argmax(scores, axis=1)
