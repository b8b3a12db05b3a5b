"""Persistence: dataset JSONL + manifest, predictions, and eval bundles.

Dataset directory layout:

  manifest.json    format version, full config, embedding reference + hash
  dataset.jsonl    one record per line
  embedding.cile   the data embedding matrix (CILE v1)

Record line schema:
  {"i": seq_index, "x": [[K x N]], "y": [[K x C]], "dag": [[parent lists]],
   "mlp_seeds": [...C...] | {"pool": index}, "flat": [...]}
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Iterator

import numpy as np

from .dag import CausalDag, DagConfig
from .embedding import DataEmbedding, read_cile, write_cile_matrix
from .processor import Activation
from .seeds import SeedSpec, derive_seed
from .sequence import (
    STREAM_MLP_FIXED,
    STREAM_MLP_POOL,
    DatasetConfig,
    Regime,
    SequenceRecord,
)

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
DATASET_NAME = "dataset.jsonl"
EMBEDDING_NAME = "embedding.cile"


class DatasetIOError(RuntimeError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_to_dict(config: DatasetConfig) -> dict:
    return {
        "vocab_size": config.vocab_size,
        "dim": config.dim,
        "n_inputs": config.dag.n_inputs,
        "n_parents": config.dag.n_parents,
        "chain_len": config.dag.chain_len,
        "n_examples": config.n_examples,
        "mlp_depth": config.mlp_depth,
        "activation": config.activation.kind.value,
        "leaky_slope": config.activation.leaky_slope,
        "n_sequences": config.n_sequences,
        "cot": config.cot,
        "regime": config.regime.value,
        "pool_size": config.pool_size,
        "master_seed": config.master_seed,
        "data_std": config.data_std,
        "split": config.split,
    }


def config_from_dict(d: dict) -> DatasetConfig:
    return DatasetConfig(
        vocab_size=d["vocab_size"],
        dim=d["dim"],
        dag=DagConfig(d["n_inputs"], d["n_parents"], d["chain_len"]),
        n_examples=d["n_examples"],
        mlp_depth=d["mlp_depth"],
        activation=Activation.parse(d["activation"], d.get("leaky_slope", 0.01)),
        n_sequences=d["n_sequences"],
        cot=d["cot"],
        regime=Regime(d["regime"]),
        pool_size=d.get("pool_size"),
        master_seed=d["master_seed"],
        data_std=d.get("data_std", 1.0),
        split=d.get("split", "train"),
    )


def record_to_json(record: SequenceRecord) -> str:
    obj = {
        "i": record.seq_index,
        "x": record.input_tokens.tolist(),
        "y": record.chain_tokens.tolist(),
        "dag": [list(p) for p in record.dag.parents],
        "mlp_seeds": (
            {"pool": record.pool_index}
            if record.pool_index is not None
            else list(record.processor_seeds)
        ),
        "flat": record.flat_tokens.tolist(),
    }
    return json.dumps(obj, separators=(",", ":"))


def _resolve_pool_seeds(config: DatasetConfig, pool_index: int) -> tuple[int, ...]:
    spec = SeedSpec(config.master_seed, STREAM_MLP_POOL)
    c_len = config.dag.chain_len
    return tuple(derive_seed(spec, pool_index * c_len + c) for c in range(c_len))


def _fixed_seeds(config: DatasetConfig) -> tuple[int, ...]:
    spec = SeedSpec(config.master_seed, STREAM_MLP_FIXED)
    return tuple(derive_seed(spec, c) for c in range(config.dag.chain_len))


def record_from_json(line: str, config: DatasetConfig) -> SequenceRecord:
    obj = json.loads(line)
    seeds_field = obj["mlp_seeds"]
    if isinstance(seeds_field, dict):
        pool_index = seeds_field["pool"]
        seeds = _resolve_pool_seeds(config, pool_index)
    else:
        pool_index = None
        seeds = tuple(seeds_field)
    return SequenceRecord(
        seq_index=obj["i"],
        input_tokens=np.asarray(obj["x"], dtype=np.int64),
        chain_tokens=np.asarray(obj["y"], dtype=np.int64),
        dag=CausalDag(
            config=config.dag,
            parents=tuple(tuple(p) for p in obj["dag"]),
        ),
        processor_seeds=seeds,
        pool_index=pool_index,
        flat_tokens=np.asarray(obj["flat"], dtype=np.int64),
    )


def write_dataset(
    out_dir,
    config: DatasetConfig,
    embedding: DataEmbedding,
    records: Iterable[SequenceRecord],
) -> dict:
    """Write embedding, JSONL records, and manifest. Returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    emb_path = os.path.join(out_dir, EMBEDDING_NAME)
    write_cile_matrix(emb_path, embedding.values)

    n_records = 0
    with open(os.path.join(out_dir, DATASET_NAME), "w", encoding="utf-8") as f:
        for record in records:
            f.write(record_to_json(record))
            f.write("\n")
            n_records += 1

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config_to_dict(config),
        "embedding_file": EMBEDDING_NAME,
        "embedding_sha256": sha256_file(emb_path),
        "created": datetime.now(timezone.utc).isoformat(),
        "n_records": n_records,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest


def read_manifest(dataset_dir) -> tuple[dict, DatasetConfig]:
    path = os.path.join(dataset_dir, MANIFEST_NAME)
    try:
        with open(path, encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetIOError(f"cannot read manifest {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetIOError(
            f"unsupported dataset format version {manifest.get('format_version')}"
        )
    return manifest, config_from_dict(manifest["config"])


def read_embedding(dataset_dir, manifest: dict, config: DatasetConfig) -> DataEmbedding:
    emb_path = os.path.join(dataset_dir, manifest["embedding_file"])
    actual = sha256_file(emb_path)
    if actual != manifest["embedding_sha256"]:
        raise DatasetIOError(
            f"embedding hash mismatch: manifest says {manifest['embedding_sha256']}, "
            f"file is {actual}"
        )
    values = read_cile(emb_path).astype(np.float64)
    return DataEmbedding(config.vocab_size, config.dim, values)


def read_dataset(dataset_dir):
    """Returns (manifest, config, embedding, iterator of records)."""
    manifest, config = read_manifest(dataset_dir)
    embedding = read_embedding(dataset_dir, manifest, config)

    def records() -> Iterator[SequenceRecord]:
        count = 0
        with open(os.path.join(dataset_dir, DATASET_NAME), encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    yield record_from_json(line, config)
                    count += 1
        if count != manifest["n_records"]:
            raise DatasetIOError(
                f"dataset truncated: manifest says {manifest['n_records']} records, "
                f"found {count}"
            )

    return manifest, config, embedding, records()


@dataclass
class EvalBundle:
    """Model-side artifacts aligned to an evaluation dataset."""

    predictions: np.ndarray            # (T, C) or (T, 1), int64
    seq_indices: np.ndarray            # (T,) int64
    model_embedding: np.ndarray | None = None   # (|V|, hidden)
    attention: np.ndarray | None = None         # (T, layers, heads, rows, cols)


def write_predictions(path, seq_indices, predictions) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, pred in zip(seq_indices, predictions):
            f.write(json.dumps({"i": int(i), "pred": [int(p) for p in pred]},
                               separators=(",", ":")))
            f.write("\n")


def read_eval_bundle(
    predictions_path,
    config: DatasetConfig,
    model_embedding_path=None,
    attention_path=None,
) -> EvalBundle:
    indices, preds = [], []
    width = None
    with open(predictions_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            pred = obj["pred"]
            if width is None:
                width = len(pred)
            elif len(pred) != width:
                raise DatasetIOError("ragged prediction rows")
            indices.append(obj["i"])
            preds.append(pred)
    if not preds:
        raise DatasetIOError(f"{predictions_path}: no predictions")

    expected_width = config.dag.chain_len if config.cot else 1
    if width != expected_width:
        raise DatasetIOError(
            f"prediction width {width} does not match dataset chain length "
            f"(expected {expected_width})"
        )
    seq_indices = np.asarray(indices, dtype=np.int64)
    if len(np.unique(seq_indices)) != len(seq_indices):
        raise DatasetIOError("duplicate seq_index in predictions")

    model_embedding = None
    if model_embedding_path is not None:
        model_embedding = read_cile(model_embedding_path).astype(np.float64)
        if model_embedding.shape[0] != config.vocab_size:
            raise DatasetIOError(
                f"model embedding has {model_embedding.shape[0]} rows, "
                f"dataset vocab is {config.vocab_size}"
            )

    attention = None
    if attention_path is not None:
        attention = read_cile(attention_path).astype(np.float64)
        if attention.ndim != 5:
            raise DatasetIOError(
                f"attention tensor must be 5-D (T, layers, heads, rows, cols), "
                f"got {attention.ndim}-D"
            )
        if attention.shape[0] != len(seq_indices):
            raise DatasetIOError("attention tensor misaligned with predictions")
        window = config.dag.n_inputs + config.dag.chain_len
        if attention.shape[3] < window or attention.shape[4] < window:
            raise DatasetIOError(
                f"attention window {attention.shape[3:]} smaller than N+C={window}"
            )

    return EvalBundle(
        predictions=np.asarray(preds, dtype=np.int64),
        seq_indices=seq_indices,
        model_embedding=model_embedding,
        attention=attention,
    )
