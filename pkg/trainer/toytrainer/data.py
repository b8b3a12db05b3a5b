"""Readers and writers for the dataset/eval file formats.

The trainer talks to the generator only through files: a dataset directory
(manifest.json + dataset.jsonl + embedding.cile) in, and predictions JSONL
plus CILE matrices/tensors out.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

CILE_MAGIC = b"CILE"


@dataclass
class DatasetSpec:
    vocab_size: int
    n_inputs: int
    chain_len: int
    n_examples: int
    cot: bool
    n_records: int

    @property
    def example_len(self) -> int:
        return self.n_inputs + (self.chain_len if self.cot else 1)

    @property
    def seq_len(self) -> int:
        return self.n_examples * self.example_len


@dataclass
class Dataset:
    spec: DatasetSpec
    seq_indices: np.ndarray   # (T,)
    flat: np.ndarray          # (T, seq_len) int16
    chains: np.ndarray        # (T, K, C) ground-truth chain tokens


def load_dataset(dataset_dir: str) -> Dataset:
    with open(os.path.join(dataset_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    cfg = manifest["config"]
    spec = DatasetSpec(
        vocab_size=cfg["vocab_size"],
        n_inputs=cfg["n_inputs"],
        chain_len=cfg["chain_len"],
        n_examples=cfg["n_examples"],
        cot=cfg["cot"],
        n_records=manifest["n_records"],
    )
    indices = np.empty(spec.n_records, dtype=np.int64)
    flat = np.empty((spec.n_records, spec.seq_len), dtype=np.int16)
    chains = np.empty(
        (spec.n_records, spec.n_examples, spec.chain_len), dtype=np.int16
    )
    row = 0
    with open(os.path.join(dataset_dir, "dataset.jsonl"), encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            indices[row] = obj["i"]
            flat[row] = obj["flat"]
            chains[row] = obj["y"]
            row += 1
    if row != spec.n_records:
        raise ValueError(
            f"manifest promises {spec.n_records} records, file has {row}"
        )
    return Dataset(spec=spec, seq_indices=indices, flat=flat, chains=chains)


def target_mask(spec: DatasetSpec) -> np.ndarray:
    """Boolean mask over next-token target positions (length seq_len - 1):
    True where the predicted token is a chain token (CoT) or the answer
    token (non-CoT)."""
    el = spec.example_len
    positions = np.arange(1, spec.seq_len)  # token being predicted
    if spec.cot:
        return positions % el >= spec.n_inputs
    return positions % el == spec.n_inputs


def write_predictions(path, seq_indices, predictions) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, pred in zip(seq_indices, predictions):
            f.write(json.dumps({"i": int(i), "pred": [int(p) for p in pred]},
                               separators=(",", ":")))
            f.write("\n")


def write_cile_matrix(path, matrix: np.ndarray) -> None:
    m = np.asarray(matrix)
    with open(path, "wb") as f:
        f.write(CILE_MAGIC)
        f.write(struct.pack("<HII", 1, m.shape[0], m.shape[1]))
        f.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def write_cile_tensor(path, tensor: np.ndarray) -> None:
    t = np.asarray(tensor)
    with open(path, "wb") as f:
        f.write(CILE_MAGIC)
        f.write(struct.pack("<HI", 2, t.ndim))
        f.write(struct.pack(f"<{t.ndim}I", *t.shape))
        f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
