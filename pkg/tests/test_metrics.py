import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from chainlab import sample_data_embedding
from chainlab.dag import CausalDag, DagConfig
from chainlab.dataset_io import EvalBundle
from chainlab.metrics import (
    attention_precision,
    binarize_attention,
    compute_accuracy,
    mean_attention,
    subspace_similarity,
)
from chainlab.seeds import SeedSpec
from chainlab.sequence import generate_dataset

from conftest import make_config


def make_bundle(records, predictions):
    return EvalBundle(
        predictions=np.asarray(predictions, dtype=np.int64),
        seq_indices=np.asarray([r.seq_index for r in records], dtype=np.int64),
    )


def small_records(n=20, **overrides):
    cfg = make_config(n_sequences=n, **overrides)
    emb = sample_data_embedding(cfg.vocab_size, cfg.dim, cfg.stream("embed"))
    return cfg, list(generate_dataset(cfg, emb))


class TestAccuracy:
    def test_perfect_predictions(self):
        _, recs = small_records()
        preds = [r.chain_tokens[-1] for r in recs]
        report = compute_accuracy(make_bundle(recs, preds), recs)
        assert report.answer_accuracy == 1.0
        assert all(p == 1.0 for p in report.per_position)

    def test_answer_accuracy_is_last_position(self):
        _, recs = small_records()
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 64, size=(len(recs), 2))
        report = compute_accuracy(make_bundle(recs, preds), recs)
        assert report.answer_accuracy == report.per_position[-1]

    def test_non_cot_single_column(self):
        _, recs = small_records()
        preds = [[r.chain_tokens[-1, -1]] for r in recs]
        report = compute_accuracy(make_bundle(recs, preds), recs)
        assert report.answer_accuracy == 1.0
        assert len(report.per_position) == 1

    def test_random_predictions_near_chance(self):
        cfg, recs = small_records(n=2000, vocab_size=1024)
        rng = np.random.default_rng(1)
        preds = rng.integers(0, 1024, size=(len(recs), 2))
        report = compute_accuracy(make_bundle(recs, preds), recs)
        p = 1 / 1024
        bound = 3 * np.sqrt(p * (1 - p) / len(recs))
        assert abs(report.answer_accuracy - p) < bound + p  # generous 3-sigma

    def test_misaligned_index_rejected(self):
        _, recs = small_records(n=5)
        bundle = make_bundle(recs, [r.chain_tokens[-1] for r in recs])
        bundle.seq_indices[0] = 999
        with pytest.raises(ValueError):
            compute_accuracy(bundle, recs)


class TestSubspaceSimilarity:
    @pytest.mark.parametrize("d", [5, 10, 40])
    def test_self_similarity(self, d):
        emb = sample_data_embedding(128, d, SeedSpec(d, "embed"))
        sim = subspace_similarity(emb.values, emb.values, d)
        assert sim == pytest.approx(1 / np.sqrt(d), abs=1e-6)

    def test_orthogonal_complement_is_zero(self):
        rng = np.random.default_rng(3)
        q = np.linalg.qr(rng.standard_normal((64, 64)))[0]
        a, b = q[:, :8], q[:, 8:16]
        assert subspace_similarity(a, b, 8) == pytest.approx(0.0, abs=1e-9)

    def test_rotation_invariance(self):
        d = 10
        emb = sample_data_embedding(128, d, SeedSpec(1, "embed")).values
        q = ortho_group.rvs(d, random_state=5)
        base = subspace_similarity(emb, emb, d)
        rotated = subspace_similarity(emb, emb @ q, d)
        assert rotated == pytest.approx(base, abs=1e-6)
        assert rotated == pytest.approx(1 / np.sqrt(d), abs=1e-6)

    def test_scaling_invariance(self):
        d = 7
        emb = sample_data_embedding(50, d, SeedSpec(2, "embed")).values
        assert subspace_similarity(emb, 37.5 * emb, d) == pytest.approx(
            subspace_similarity(emb, emb, d), abs=1e-6
        )

    def test_rank_deficiency_reported(self):
        rng = np.random.default_rng(4)
        full = rng.standard_normal((32, 6))
        degenerate = np.outer(rng.standard_normal(32), rng.standard_normal(6))
        with pytest.raises(ValueError, match="second"):
            subspace_similarity(full, degenerate, 6)

    def test_d_must_be_below_rows(self):
        m = np.eye(5)
        with pytest.raises(ValueError):
            subspace_similarity(m, m, 5)


class TestMeanAttention:
    def test_single_head_identity(self):
        m = np.random.default_rng(0).random((1, 6, 6))
        np.testing.assert_array_equal(mean_attention(m), m[0])

    def test_zeros_and_ones(self):
        stack = np.stack([np.zeros((4, 4)), np.ones((4, 4))])
        np.testing.assert_allclose(mean_attention(stack), np.full((4, 4), 0.5))

    def test_matches_direct_mean(self):
        stack = np.random.default_rng(1).random((8, 5, 5))
        np.testing.assert_allclose(mean_attention(stack), stack.mean(axis=0))


def dag_with_final_parents(n, m, c, parents):
    """A DAG whose final chain position has the given parents; earlier
    positions take the lowest-index parents."""
    rows = [tuple(range(m)) for _ in range(c - 1)] + [tuple(sorted(parents))]
    return CausalDag(config=DagConfig(n, m, c), parents=tuple(rows))


class TestAttentionPrecision:
    def test_mass_on_parents_gives_one(self):
        n, c, m = 4, 4, 2
        dag = dag_with_final_parents(n, m, c, (1, 5))
        amap = np.zeros((3, n + c))
        window = amap[-1, -(n + c - 1):]
        window[1] = 0.9
        window[5] = 0.8
        assert attention_precision(amap, dag, n, c, m) == 1.0

    def test_mass_on_non_parent_gives_zero(self):
        n, c, m = 4, 4, 1
        dag = dag_with_final_parents(n, m, c, (2,))
        amap = np.zeros((2, n + c))
        amap[-1, -(n + c - 1):][0] = 1.0
        assert attention_precision(amap, dag, n, c, m) == 0.0

    def test_random_map_mean_matches_symmetry(self):
        # over random maps and random parents, E[precision] = M/(N+C-1)
        n, c = 4, 4
        rng = np.random.default_rng(7)
        window = n + c - 1
        for m in (1, 2, 3):
            total = 0.0
            trials = 2000
            for _ in range(trials):
                amap = rng.random((1, n + c))
                parents = rng.choice(window, size=m, replace=False)
                dag = dag_with_final_parents(n, m, c, tuple(parents))
                total += attention_precision(amap, dag, n, c, m)
            assert abs(total / trials - m / window) < 0.05

    def test_tie_break_prefers_higher_column(self):
        n, c, m = 4, 2, 1
        amap = np.zeros((1, n + c))  # all-tied window
        dag_hi = dag_with_final_parents(n, m, c, (n + c - 2,))
        assert attention_precision(amap, dag_hi, n, c, m) == 1.0
        dag_lo = dag_with_final_parents(n, m, c, (0,))
        assert attention_precision(amap, dag_lo, n, c, m) == 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_precision_takes_quantized_values(self, seed):
        n, c, m = 4, 3, 2
        rng = np.random.default_rng(seed)
        amap = rng.random((2, n + c))
        parents = rng.choice(n + c - 1, size=m, replace=False)
        dag = dag_with_final_parents(n, m, c, tuple(parents))
        p = attention_precision(amap, dag, n, c, m)
        assert p in {i / m for i in range(m + 1)}

    def test_window_too_small_rejected(self):
        dag = dag_with_final_parents(4, 1, 4, (0,))
        with pytest.raises(ValueError):
            attention_precision(np.zeros((2, 3)), dag, 4, 4, 1)


class TestBinarize:
    def test_all_below_threshold(self):
        m = np.full((3, 3), 1e-5)
        np.testing.assert_array_equal(binarize_attention(m, 1e-3),
                                      np.zeros((3, 3), dtype=np.int8))

    def test_threshold_is_strict(self):
        m = np.array([[0.0005, 0.002], [1e-3, 0.5]])
        np.testing.assert_array_equal(binarize_attention(m, 1e-3),
                                      [[0, 1], [0, 1]])

    def test_idempotent(self):
        m = np.random.default_rng(0).random((4, 4))
        once = binarize_attention(m, 1e-3)
        twice = binarize_attention(once, 0.5)
        np.testing.assert_array_equal(once, twice)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            binarize_attention(np.zeros((2, 2)), 0.0)
