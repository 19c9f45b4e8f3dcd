import numpy as np
import pytest

from again import autodiff as ad
from again.model import (
    ConfigError,
    EncoderConfig,
    LEAKY_SLOPE,
    attention_coefficients,
    classify,
    encode,
    layer_forward,
    mlp_forward,
    predict,
    uniform_coefficients,
)
from again.params import init_parameters
from again.sampling import exhaustive_neighborhood, sample_neighborhood

from conftest import build_graph, random_graph


def leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def reference_encode(g, weights, depth):
    """Straight-line recursive evaluation of the full encoder, one node at a
    time, written against numpy only."""
    reps = {v: g.features[v].astype(np.float64) for v in range(g.node_count)}
    for k in range(1, depth + 1):
        w, a, wv, ws = (weights[k][key] for key in ("W", "a", "Wv", "Ws"))
        half = w.shape[1]
        new = {}
        for v in range(g.node_count):
            nbrs = g.neighbors[v]
            if len(nbrs) == 0:
                nbrs = np.array([v])
            z_self = reps[v] @ w
            logits = np.array(
                [
                    leaky(
                        float(a[:half, 0] @ z_self + a[half:, 0] @ (reps[u] @ w))
                    )
                    for u in nbrs
                ]
            )
            alpha = softmax(logits)
            h_s = sum(alpha[i] * reps[u] for i, u in enumerate(nbrs))
            pre = np.concatenate([reps[v] @ wv, h_s @ ws])
            act = np.maximum(pre, 0.0)
            new[v] = act / (np.linalg.norm(act) + 1e-12)
        reps = new
    return reps


@pytest.fixture
def six_graph():
    rng = np.random.default_rng(13)
    return build_graph(
        [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (4, 5)],
        rng.normal(size=(6, 5)).astype(np.float32),
        [0, 1, 0, 1, 0, 1],
    )


def make_params(g, cfg, mode="gain", seed=0):
    return init_parameters(
        cfg, g.feature_dim, g.class_count, mode, seed=seed, dtype=np.float64
    )


class TestAttention:
    def test_two_neighbor_hand_oracle(self):
        # logits are exactly [2, 0] so alpha = softmax([2, 0])
        layer = {
            "W": ad.parameter(np.array([[1.0]])),
            "a": ad.parameter(np.array([[0.0], [1.0]])),
        }
        h_t = ad.constant(np.array([[0.0]]))
        h_n = ad.constant(np.array([[2.0], [0.0]]))
        alpha = attention_coefficients(
            h_t, h_n, np.array([0, 1]), np.array([0, 2]), layer
        )
        np.testing.assert_allclose(
            alpha.data[:, 0], softmax(np.array([2.0, 0.0])), atol=1e-12
        )
        assert alpha.data[0, 0] == pytest.approx(0.8808, abs=1e-4)
        assert alpha.data[1, 0] == pytest.approx(0.1192, abs=1e-4)

    def test_rows_sum_to_one(self, six_graph):
        cfg = EncoderConfig(depth=1, hidden_dim=4, attention_vector_dim=4)
        params = make_params(six_graph, cfg)
        batch = exhaustive_neighborhood(six_graph, np.arange(6), depth=1)
        h = ad.constant(six_graph.features.astype(np.float64))
        h_t = ad.gather_rows(h, batch.level_nodes[0])
        h_n = ad.gather_rows(h, batch.level_nodes[1])
        alpha = attention_coefficients(
            h_t, h_n, batch.positions[0], batch.offsets[0], params.layer(1)
        )
        sums = np.add.reduceat(alpha.data[:, 0], batch.offsets[0][:-1])
        np.testing.assert_allclose(sums, np.ones(6), atol=1e-6)

    def test_uniform_coefficients_are_inverse_counts(self):
        offsets = np.array([0, 2, 5])
        alpha = uniform_coefficients(np.arange(5), offsets)
        np.testing.assert_allclose(
            alpha.data[:, 0], [0.5, 0.5, 1 / 3, 1 / 3, 1 / 3], atol=1e-12
        )


class TestEncode:
    def test_forward_matches_straight_line_reference(self, six_graph):
        cfg = EncoderConfig(depth=2, hidden_dim=6, attention_vector_dim=4)
        params = make_params(six_graph, cfg, seed=3)
        weights = {k: {n: t.data for n, t in params.layer(k).items()} for k in (1, 2)}
        expected = reference_encode(six_graph, weights, depth=2)

        batch = exhaustive_neighborhood(six_graph, np.arange(6), depth=2)
        emb = encode(six_graph, batch, params, cfg)
        for v in range(6):
            np.testing.assert_allclose(emb.matrix[v], expected[v], atol=1e-9)

    def test_unit_norm_rows(self, six_graph):
        cfg = EncoderConfig(depth=2, hidden_dim=6, attention_vector_dim=4)
        params = make_params(six_graph, cfg, seed=1)
        batch = sample_neighborhood(six_graph, np.arange(6), [3, 3], seed=0)
        emb = encode(six_graph, batch, params, cfg)
        np.testing.assert_allclose(
            np.linalg.norm(emb.matrix, axis=1), np.ones(6), atol=1e-5
        )
        assert np.all(emb.matrix >= 0)  # post-ReLU embeddings are non-negative

    def test_mean_aggregator_matches_manual_mean(self, six_graph):
        cfg = EncoderConfig(depth=1, hidden_dim=4, aggregator_kind="mean")
        params = make_params(six_graph, cfg, mode="gs-mean", seed=2)
        batch = exhaustive_neighborhood(six_graph, np.array([3]), depth=1)
        emb = encode(six_graph, batch, params, cfg)

        feats = six_graph.features.astype(np.float64)
        nbrs = six_graph.neighbors[3]
        h_s = feats[nbrs].mean(axis=0)
        pre = np.concatenate(
            [feats[3] @ params.tensors["enc.k1.Wv"].data, h_s @ params.tensors["enc.k1.Ws"].data]
        )
        act = np.maximum(pre, 0)
        np.testing.assert_allclose(
            emb.matrix[0], act / (np.linalg.norm(act) + 1e-12), atol=1e-6
        )

    def test_target_permutation_equivariance(self, six_graph):
        cfg = EncoderConfig(depth=2, hidden_dim=6, attention_vector_dim=4)
        params = make_params(six_graph, cfg, seed=4)
        fwd = encode(six_graph, exhaustive_neighborhood(six_graph, np.array([1, 4]), 2), params, cfg)
        rev = encode(six_graph, exhaustive_neighborhood(six_graph, np.array([4, 1]), 2), params, cfg)
        np.testing.assert_allclose(fwd.matrix[0], rev.matrix[1], atol=1e-12)
        np.testing.assert_allclose(fwd.matrix[1], rev.matrix[0], atol=1e-12)

    def test_embedding_depends_only_on_k_ball(self, line_graph):
        # node 0's depth-2 neighborhood on the path 0-1-2-3 is {0, 1, 2}
        cfg = EncoderConfig(depth=2, hidden_dim=4, attention_vector_dim=4)
        params = make_params(line_graph, cfg, seed=5)
        before = encode(
            line_graph, exhaustive_neighborhood(line_graph, np.array([0]), 2), params, cfg
        ).matrix.copy()
        altered = line_graph.with_features(
            np.vstack([line_graph.features[:3], np.full((1, 4), 9.0, dtype=np.float32)])
        )
        after = encode(
            altered, exhaustive_neighborhood(altered, np.array([0]), 2), params, cfg
        ).matrix
        np.testing.assert_allclose(before, after, atol=0)

    def test_depth_mismatch_rejected(self, six_graph):
        cfg = EncoderConfig(depth=2, hidden_dim=4, attention_vector_dim=4)
        params = make_params(six_graph, cfg)
        batch = exhaustive_neighborhood(six_graph, np.array([0]), depth=1)
        with pytest.raises(ConfigError, match="depth"):
            encode(six_graph, batch, params, cfg)

    def test_train_mode_requires_rng(self, six_graph):
        cfg = EncoderConfig(depth=1, hidden_dim=4, attention_vector_dim=4)
        params = make_params(six_graph, cfg)
        batch = exhaustive_neighborhood(six_graph, np.array([0]), depth=1)
        with pytest.raises(ConfigError, match="rng"):
            encode(six_graph, batch, params, cfg, train=True)

    def test_dropout_changes_train_output_only(self, six_graph):
        cfg = EncoderConfig(depth=1, hidden_dim=8, attention_vector_dim=4)
        params = make_params(six_graph, cfg, seed=6)
        batch = exhaustive_neighborhood(six_graph, np.arange(6), depth=1)
        clean = encode(six_graph, batch, params, cfg).matrix
        noisy = encode(
            six_graph, batch, params, cfg, train=True,
            rng=np.random.default_rng(0), dropout_rate=0.5,
        ).matrix
        assert not np.allclose(clean, noisy)


class TestHeads:
    def test_classify_rows_are_distributions(self, six_graph):
        cfg = EncoderConfig(depth=1, hidden_dim=4, attention_vector_dim=4)
        params = make_params(six_graph, cfg)
        batch = exhaustive_neighborhood(six_graph, np.arange(6), depth=1)
        scores = classify(encode(six_graph, batch, params, cfg), params)
        assert scores.data.shape == (6, 2)
        np.testing.assert_allclose(scores.data.sum(axis=1), np.ones(6), atol=1e-9)
        assert predict(scores).shape == (6,)

    def test_mlp_forward_shapes_and_guard(self, six_graph):
        cfg = EncoderConfig(depth=2, hidden_dim=4, aggregator_kind="none-mlp")
        params = make_params(six_graph, cfg, mode="mlp")
        out = mlp_forward(ad.constant(six_graph.features.astype(np.float64)), params)
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(6), atol=1e-9)
        gain_params = make_params(six_graph, EncoderConfig(depth=1, hidden_dim=4))
        with pytest.raises(ConfigError, match="mlp"):
            mlp_forward(ad.constant(six_graph.features), gain_params)

    def test_encode_rejected_for_mlp_config(self, six_graph):
        cfg = EncoderConfig(depth=2, hidden_dim=4, aggregator_kind="none-mlp")
        params = make_params(six_graph, cfg, mode="mlp")
        batch = exhaustive_neighborhood(six_graph, np.array([0]), depth=2)
        with pytest.raises(ConfigError):
            encode(six_graph, batch, params, cfg)


class TestEncoderConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            EncoderConfig(depth=0)
        with pytest.raises(ConfigError):
            EncoderConfig(hidden_dim=3)
        with pytest.raises(ConfigError):
            EncoderConfig(attention_vector_dim=5)
        with pytest.raises(ConfigError):
            EncoderConfig(aggregator_kind="max-pool")
        with pytest.raises(ConfigError):
            EncoderConfig(attention_heads=2)
