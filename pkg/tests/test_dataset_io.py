import json

import numpy as np
import pytest

from chainlab import sample_data_embedding, write_cile_matrix, write_cile_tensor
from chainlab.dataset_io import (
    DatasetIOError,
    read_dataset,
    read_eval_bundle,
    write_dataset,
    write_predictions,
)
from chainlab.sequence import Regime, generate_dataset, regenerate_chain_tokens

from conftest import make_config


def build_dataset(tmp_path, **overrides):
    cfg = make_config(**overrides)
    emb = sample_data_embedding(cfg.vocab_size, cfg.dim, cfg.stream("embed"))
    out = tmp_path / "ds"
    write_dataset(out, cfg, emb, generate_dataset(cfg, emb))
    return cfg, emb, out


def test_round_trip_equality(tmp_path):
    cfg, emb, out = build_dataset(tmp_path, n_sequences=100)
    manifest, rcfg, remb, records = read_dataset(out)
    assert manifest["n_records"] == 100
    assert rcfg == cfg
    np.testing.assert_allclose(remb.values, emb.values, atol=1e-6)
    originals = list(generate_dataset(cfg, emb))
    loaded = list(records)
    assert len(loaded) == 100
    for a, b in zip(originals, loaded):
        assert a.seq_index == b.seq_index
        np.testing.assert_array_equal(a.input_tokens, b.input_tokens)
        np.testing.assert_array_equal(a.chain_tokens, b.chain_tokens)
        np.testing.assert_array_equal(a.flat_tokens, b.flat_tokens)
        assert a.dag.parents == b.dag.parents
        assert a.processor_seeds == b.processor_seeds


def test_loaded_records_regenerate(tmp_path):
    # regeneration re-derives the f64 embedding from the manifest's seed;
    # the serialized f32 copy is for external consumers
    cfg, _, out = build_dataset(tmp_path, n_sequences=20)
    _, rcfg, _, records = read_dataset(out)
    emb = sample_data_embedding(rcfg.vocab_size, rcfg.dim, rcfg.stream("embed"),
                                rcfg.data_std)
    for rec in records:
        regen = regenerate_chain_tokens(rec, rcfg, emb)
        np.testing.assert_array_equal(regen, rec.chain_tokens)


def test_pool_records_round_trip(tmp_path):
    cfg, _, out = build_dataset(
        tmp_path, regime=Regime.FINITE_POOL, pool_size=4, n_sequences=50
    )
    _, rcfg, _, records = read_dataset(out)
    loaded = list(records)
    originals = list(
        generate_dataset(cfg, sample_data_embedding(
            cfg.vocab_size, cfg.dim, cfg.stream("embed")))
    )
    for a, b in zip(originals, loaded):
        assert b.pool_index == a.pool_index
        assert b.processor_seeds == a.processor_seeds
    line = (out / "dataset.jsonl").read_text().splitlines()[0]
    assert isinstance(json.loads(line)["mlp_seeds"], dict)


def test_tampered_embedding_hash_rejected(tmp_path):
    _, _, out = build_dataset(tmp_path, n_sequences=5)
    raw = bytearray((out / "embedding.cile").read_bytes())
    raw[-1] ^= 0xFF
    (out / "embedding.cile").write_bytes(bytes(raw))
    with pytest.raises(DatasetIOError, match="hash mismatch"):
        read_dataset(out)


def test_truncated_dataset_rejected(tmp_path):
    _, _, out = build_dataset(tmp_path, n_sequences=10)
    lines = (out / "dataset.jsonl").read_text().splitlines()
    (out / "dataset.jsonl").write_text("\n".join(lines[:7]) + "\n")
    _, _, _, records = read_dataset(out)
    with pytest.raises(DatasetIOError, match="truncated"):
        list(records)


def test_version_mismatch_rejected(tmp_path):
    _, _, out = build_dataset(tmp_path, n_sequences=5)
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["format_version"] = 99
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetIOError, match="version"):
        read_dataset(out)


def make_predictions(tmp_path, cfg, width, t=10):
    path = tmp_path / "preds.jsonl"
    rng = np.random.default_rng(0)
    preds = rng.integers(0, cfg.vocab_size, size=(t, width))
    write_predictions(path, range(t), preds)
    return path, preds


def test_eval_bundle_accepts_matching_width(tmp_path):
    cfg = make_config()
    path, preds = make_predictions(tmp_path, cfg, width=cfg.dag.chain_len)
    bundle = read_eval_bundle(path, cfg)
    np.testing.assert_array_equal(bundle.predictions, preds)
    assert bundle.model_embedding is None and bundle.attention is None


def test_eval_bundle_rejects_wrong_width(tmp_path):
    cfg = make_config()  # chain_len 2
    path, _ = make_predictions(tmp_path, cfg, width=3)
    with pytest.raises(DatasetIOError, match="width"):
        read_eval_bundle(path, cfg)


def test_eval_bundle_rejects_duplicate_indices(tmp_path):
    cfg = make_config()
    path = tmp_path / "preds.jsonl"
    write_predictions(path, [0, 0], [[1, 2], [3, 4]])
    with pytest.raises(DatasetIOError, match="duplicate"):
        read_eval_bundle(path, cfg)


def test_eval_bundle_optional_artifacts(tmp_path):
    cfg = make_config()
    path, _ = make_predictions(tmp_path, cfg, width=2, t=4)
    emb_path = tmp_path / "etf.cile"
    write_cile_matrix(emb_path, np.zeros((cfg.vocab_size, 16), dtype=np.float32))
    attn_path = tmp_path / "attn.cile"
    window = cfg.dag.n_inputs + cfg.dag.chain_len
    write_cile_tensor(
        attn_path, np.zeros((4, 1, 2, window, window), dtype=np.float32)
    )
    bundle = read_eval_bundle(path, cfg, emb_path, attn_path)
    assert bundle.model_embedding.shape == (cfg.vocab_size, 16)
    assert bundle.attention.shape == (4, 1, 2, window, window)


def test_eval_bundle_rejects_small_attention_window(tmp_path):
    cfg = make_config()
    path, _ = make_predictions(tmp_path, cfg, width=2, t=4)
    attn_path = tmp_path / "attn.cile"
    write_cile_tensor(attn_path, np.zeros((4, 1, 2, 3, 3), dtype=np.float32))
    with pytest.raises(DatasetIOError, match="window"):
        read_eval_bundle(path, cfg, attention_path=attn_path)


def test_eval_bundle_rejects_wrong_vocab_embedding(tmp_path):
    cfg = make_config()
    path, _ = make_predictions(tmp_path, cfg, width=2, t=4)
    emb_path = tmp_path / "etf.cile"
    write_cile_matrix(emb_path, np.zeros((cfg.vocab_size + 1, 8), dtype=np.float32))
    with pytest.raises(DatasetIOError, match="vocab"):
        read_eval_bundle(path, cfg, model_embedding_path=emb_path)
