"""Model-evaluation metrics: chain accuracy, embedding subspace similarity,
and attention-map parent-recovery precision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dag import CausalDag
from .dataset_io import EvalBundle
from .embedding import DataEmbedding


@dataclass
class AccuracyReport:
    answer_accuracy: float
    per_position: list[float]
    n_sequences: int

    def to_dict(self) -> dict:
        return {
            "answer_accuracy": self.answer_accuracy,
            "per_position": self.per_position,
            "n_sequences": self.n_sequences,
        }


@dataclass
class AttentionReport:
    precision: float
    per_sequence: list[float]
    n_sequences: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "n_sequences": self.n_sequences,
        }


def compute_accuracy(bundle: EvalBundle, records) -> AccuracyReport:
    """Exact-match rates of predicted chain tokens against ground truth.

    `records` must align with bundle.seq_indices; non-CoT bundles carry a
    single predicted answer token per sequence.
    """
    by_index = {r.seq_index: r for r in records}
    truths = []
    for i in bundle.seq_indices:
        rec = by_index.get(int(i))
        if rec is None:
            raise ValueError(f"prediction seq_index {i} not present in dataset")
        truths.append(rec.chain_tokens[-1])
    truth = np.asarray(truths, dtype=np.int64)

    preds = bundle.predictions
    if preds.shape[1] == truth.shape[1]:
        matches = preds == truth
    elif preds.shape[1] == 1:
        matches = preds == truth[:, -1:]
    else:
        raise ValueError(
            f"prediction width {preds.shape[1]} incompatible with "
            f"chain length {truth.shape[1]}"
        )
    per_position = matches.mean(axis=0)
    return AccuracyReport(
        answer_accuracy=float(per_position[-1]),
        per_position=[float(v) for v in per_position],
        n_sequences=int(preds.shape[0]),
    )


def subspace_similarity(e_data: np.ndarray, e_model: np.ndarray, d: int) -> float:
    """(1/d) * ||U_a[:, :d]^T U_b[:, :d]||_F over the left singular bases.

    Equal column spaces give 1/sqrt(d); orthogonal ones give 0.
    """
    a = np.asarray(e_data, dtype=np.float64)
    b = np.asarray(e_model, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError("matrices must have the same number of rows")
    if d >= a.shape[0]:
        raise ValueError("d must be smaller than the number of rows")
    for name, m in (("first", a), ("second", b)):
        u, s, _ = np.linalg.svd(m, full_matrices=False)
        if s.size < d or s[d - 1] <= s[0] * 1e-12:
            raise ValueError(f"{name} matrix has rank below {d}")
        if name == "first":
            ua = u[:, :d]
        else:
            ub = u[:, :d]
    return float(np.linalg.norm(ua.T @ ub, "fro") / d)


def mean_attention(per_head: np.ndarray) -> np.ndarray:
    """Entrywise mean over the head axis of an (H, rows, cols) stack."""
    maps = np.asarray(per_head, dtype=np.float64)
    if maps.ndim != 3:
        raise ValueError("expected an (H, rows, cols) stack of attention maps")
    return maps.mean(axis=0)


def attention_precision(
    mean_map: np.ndarray, dag: CausalDag, n_inputs: int, chain_len: int,
    n_parents: int,
) -> float:
    """Fraction of the answer token's true parents recovered among the top-M
    scores of the query window (last row, last N+C-1 columns).

    Window column j corresponds to the query example's position j. argsort is
    stable ascending, so score ties resolve toward the higher column index.
    """
    window = n_inputs + chain_len - 1
    m = np.asarray(mean_map, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] < window:
        raise ValueError(
            f"attention map columns {m.shape} cannot cover window {window}"
        )
    if n_parents > window:
        raise ValueError("n_parents exceeds the query window")
    query = m[-1, -window:]
    top = np.argsort(query, kind="stable")[-n_parents:]
    truth = set(dag.parents[chain_len - 1])
    return float(sum(1 for i in top if int(i) in truth) / n_parents)


def binarize_attention(mean_map: np.ndarray, threshold: float) -> np.ndarray:
    """0/1 matrix: 1 where the entry strictly exceeds the threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return (np.asarray(mean_map) > threshold).astype(np.int8)


def attention_precision_report(
    bundle: EvalBundle, records, n_inputs: int, chain_len: int, n_parents: int,
) -> AttentionReport:
    """Per-sequence precision from a bundle's last-layer attention, head-
    averaged, scored against each sequence's own DAG."""
    if bundle.attention is None:
        raise ValueError("bundle has no attention tensor")
    by_index = {r.seq_index: r for r in records}
    scores = []
    for row, i in enumerate(bundle.seq_indices):
        rec = by_index.get(int(i))
        if rec is None:
            raise ValueError(f"attention seq_index {i} not present in dataset")
        head_maps = bundle.attention[row, -1]      # last layer: (H, rows, cols)
        avg = mean_attention(head_maps)
        scores.append(
            attention_precision(avg, rec.dag, n_inputs, chain_len, n_parents)
        )
    return AttentionReport(
        precision=float(np.mean(scores)),
        per_sequence=scores,
        n_sequences=len(scores),
    )
