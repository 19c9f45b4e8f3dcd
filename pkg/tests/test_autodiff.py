import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from again import autodiff as ad


def numeric_grad(forward, tensor, step=1e-6):
    """Central finite differences of a scalar closure w.r.t. one tensor."""
    out = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    grad_flat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = float(forward().data)
        flat[i] = orig - step
        down = float(forward().data)
        flat[i] = orig
        grad_flat[i] = (up - down) / (2 * step)
    return out


def check_op(forward, tensors, atol=1e-7):
    for t in tensors:
        t.zero_grad()
    loss = forward()
    loss.backward()
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(forward, t)
        np.testing.assert_allclose(analytic, numeric, atol=atol, rtol=1e-5)


def rand(rng, *shape):
    return ad.parameter(rng.normal(size=shape))


class TestOps:
    def test_matmul(self):
        rng = np.random.default_rng(0)
        x, w = rand(rng, 4, 3), rand(rng, 3, 2)
        check_op(lambda: ad.mean_all(ad.matmul(x, w)), [x, w])

    def test_matmul_shape_error(self):
        with pytest.raises(ad.ShapeError):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_add_bias(self):
        rng = np.random.default_rng(1)
        x, b = rand(rng, 5, 3), rand(rng, 3)
        check_op(lambda: ad.mean_all(ad.add_bias(x, b)), [x, b])

    def test_concat_rows(self):
        rng = np.random.default_rng(2)
        x, y = rand(rng, 4, 2), rand(rng, 4, 3)
        out = ad.concat_rows(x, y)
        assert out.shape == (4, 5)
        check_op(lambda: ad.mean_all(ad.concat_rows(x, y)), [x, y])

    def test_leaky_relu(self):
        x = ad.parameter(np.array([[-2.0, -0.5, 0.5, 3.0]]))
        out = ad.leaky_relu(x)
        np.testing.assert_allclose(out.data, [[-0.4, -0.1, 0.5, 3.0]])
        check_op(lambda: ad.mean_all(ad.leaky_relu(x)), [x])

    def test_relu_gradient_zero_in_dead_region(self):
        x = ad.parameter(np.array([[-1.0, 2.0]]))
        loss = ad.mean_all(ad.relu(x))
        loss.backward()
        np.testing.assert_allclose(x.grad, [[0.0, 0.5]])

    def test_sigmoid_stable_at_extremes(self):
        x = ad.constant(np.array([[-1000.0, 0.0, 1000.0]]))
        out = ad.sigmoid(x)
        np.testing.assert_allclose(out.data, [[0.0, 0.5, 1.0]], atol=1e-12)

    def test_sigmoid_grad(self):
        rng = np.random.default_rng(3)
        x = rand(rng, 3, 4)
        check_op(lambda: ad.mean_all(ad.sigmoid(x)), [x])

    def test_softmax_rows(self):
        rng = np.random.default_rng(4)
        x = rand(rng, 5, 3)
        out = ad.softmax_rows(x)
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(5), atol=1e-12)
        w = ad.constant(rng.normal(size=(5, 3)))  # asymmetric downstream weights
        check_op(lambda: ad.mean_all(ad.add(ad.softmax_rows(x), ad.scale(w, 0.0))), [x])

    def test_l2_normalize_rows(self):
        rng = np.random.default_rng(5)
        x = rand(rng, 4, 3)
        out = ad.l2_normalize_rows(x)
        np.testing.assert_allclose(
            np.linalg.norm(out.data, axis=1), np.ones(4), atol=1e-9
        )
        check_op(lambda: ad.mean_all(ad.l2_normalize_rows(x)), [x], atol=1e-6)

    def test_l2_normalize_zero_row(self):
        x = ad.constant(np.zeros((1, 3)))
        np.testing.assert_array_equal(ad.l2_normalize_rows(x).data, np.zeros((1, 3)))

    def test_log_clipped_gradient_inside_and_clamped(self):
        x = ad.parameter(np.array([0.5, 1e-15]))
        loss = ad.mean_all(ad.log_clipped(x))
        loss.backward()
        np.testing.assert_allclose(x.grad, [1.0 / (2 * 0.5), 0.0])

    def test_scale_and_mean_rows(self):
        rng = np.random.default_rng(6)
        x = rand(rng, 6, 2)
        check_op(lambda: ad.mean_all(ad.scale(ad.mean_rows(x), 3.0)), [x])

    def test_slice_and_gather_rows(self):
        rng = np.random.default_rng(7)
        x = rand(rng, 6, 3)
        idx = np.array([0, 2, 2, 5])
        check_op(lambda: ad.mean_all(ad.slice_rows(x, 1, 4)), [x])
        check_op(lambda: ad.mean_all(ad.gather_rows(x, idx)), [x])

    def test_gather_accumulates_duplicates(self):
        x = ad.parameter(np.zeros((3, 1)))
        loss = ad.mean_all(ad.gather_rows(x, np.array([1, 1, 1, 0])))
        loss.backward()
        np.testing.assert_allclose(x.grad, [[0.25], [0.75], [0.0]])

    def test_dropout_train_and_eval(self):
        rng = np.random.default_rng(8)
        x = ad.parameter(np.ones((200, 10)))
        out = ad.dropout(x, 0.5, rng, train=True)
        kept = out.data != 0
        assert 0.3 < kept.mean() < 0.7
        np.testing.assert_allclose(out.data[kept], 2.0)  # inverted scaling
        same = ad.dropout(x, 0.5, rng, train=False)
        assert same is x

    def test_segment_softmax(self):
        rng = np.random.default_rng(9)
        logits = rand(rng, 7, 1)
        offsets = np.array([0, 3, 3, 7])  # includes an empty segment
        out = ad.segment_softmax(logits, offsets)
        np.testing.assert_allclose(out.data[0:3].sum(), 1.0, atol=1e-12)
        np.testing.assert_allclose(out.data[3:7].sum(), 1.0, atol=1e-12)
        w = ad.constant(rng.normal(size=(7, 1)))
        check_op(
            lambda: ad.mean_all(
                ad.add(ad.segment_softmax(logits, offsets), ad.scale(w, 0.0))
            ),
            [logits],
        )

    def test_segment_weighted_sum_forward(self):
        weights = ad.parameter(np.array([[0.25], [0.75], [1.0]]))
        source = ad.parameter(np.array([[1.0, 0.0], [0.0, 1.0]]))
        positions = np.array([0, 1, 0])
        offsets = np.array([0, 2, 3])
        out = ad.segment_weighted_sum(weights, source, positions, offsets)
        np.testing.assert_allclose(out.data, [[0.25, 0.75], [1.0, 0.0]])

    def test_segment_weighted_sum_grad(self):
        rng = np.random.default_rng(10)
        weights, source = rand(rng, 5, 1), rand(rng, 3, 4)
        positions = np.array([0, 1, 1, 2, 0])
        offsets = np.array([0, 2, 5])
        check_op(
            lambda: ad.mean_all(
                ad.segment_weighted_sum(weights, source, positions, offsets)
            ),
            [weights, source],
        )

    def test_cross_entropy_matches_hand_value(self):
        scores = ad.parameter(np.array([[0.7, 0.3], [0.2, 0.8]]))
        loss = ad.cross_entropy(scores, np.array([0, 1]))
        expected = -(np.log(0.7) + np.log(0.8)) / 2
        assert float(loss.data) == pytest.approx(expected, abs=1e-12)
        loss.backward()
        np.testing.assert_allclose(
            scores.grad, [[-1 / (2 * 0.7), 0.0], [0.0, -1 / (2 * 0.8)]], atol=1e-12
        )

    def test_cross_entropy_rejects_unnormalized_rows(self):
        with pytest.raises(ad.ShapeError, match="summing to 1"):
            ad.cross_entropy(ad.constant(np.array([[0.9, 0.9]])), np.array([0]))

    def test_cross_entropy_rejects_bad_labels(self):
        with pytest.raises(ad.ShapeError):
            ad.cross_entropy(ad.constant(np.array([[0.5, 0.5]])), np.array([2]))


class TestEngine:
    def test_backward_requires_scalar(self):
        x = ad.parameter(np.ones((2, 2)))
        with pytest.raises(ad.ShapeError):
            x.backward()

    def test_shared_subexpression_accumulates(self):
        x = ad.parameter(np.array([[2.0]]))
        y = ad.add(x, x)  # dy/dx = 2
        loss = ad.mean_all(y)
        loss.backward()
        np.testing.assert_allclose(x.grad, [[2.0]])

    def test_diamond_graph(self):
        x = ad.parameter(np.array([[1.0, -1.0]]))
        a = ad.relu(x)
        b = ad.leaky_relu(x)
        loss = ad.mean_all(ad.add(a, b))
        loss.backward()
        np.testing.assert_allclose(x.grad, [[1.0, 0.1]])

    def test_detach_blocks_gradient(self):
        x = ad.parameter(np.ones((1, 2)))
        loss = ad.mean_all(x.detach())
        assert not loss.requires_grad
        loss.backward()
        assert x.grad is None

    def test_deep_chain_no_recursion_limit(self):
        x = ad.parameter(np.ones((1, 1)))
        t = x
        for _ in range(5000):
            t = ad.scale(t, 1.0)
        loss = ad.mean_all(t)
        loss.backward()
        np.testing.assert_allclose(x.grad, [[1.0]])

    def test_check_finite_raises(self):
        with pytest.raises(ad.NumericError):
            ad.check_finite(ad.constant(np.array([np.inf])), "test")

    def test_grad_check_passes_on_composite(self):
        rng = np.random.default_rng(11)
        w1 = ad.parameter(rng.normal(size=(4, 3)))
        w2 = ad.parameter(rng.normal(size=(3, 2)))
        x = np.ascontiguousarray(rng.normal(size=(5, 4)))

        def forward():
            h = ad.relu(ad.matmul(ad.constant(x), w1))
            return ad.mean_all(ad.sigmoid(ad.matmul(h, w2)))

        result = ad.grad_check(forward, [w1, w2], tolerance=1e-3)
        assert result["passed"]
        assert result["max_rel_error"] < 1e-5

    def test_grad_check_catches_wrong_gradient(self):
        w = ad.parameter(np.array([[0.3]]))

        def forward():
            out = ad.scale(w, 2.0)
            out._backward = lambda g: w._accumulate(g * 5.0)  # wrong on purpose
            return ad.mean_all(out)

        result = ad.grad_check(forward, [w], tolerance=1e-3)
        assert not result["passed"]


@settings(max_examples=25, deadline=None)
@given(
    rows=st.integers(1, 6),
    cols=st.integers(1, 5),
    seed=st.integers(0, 2**31 - 1),
)
def test_softmax_rows_property(rows, cols, seed):
    rng = np.random.default_rng(seed)
    x = ad.parameter(rng.normal(scale=5.0, size=(rows, cols)))
    out = ad.softmax_rows(x)
    assert np.all(out.data >= 0)
    np.testing.assert_allclose(out.data.sum(axis=1), np.ones(rows), atol=1e-10)
    # invariance to per-row shifts
    shifted = ad.softmax_rows(ad.constant(x.data + rng.normal(size=(rows, 1))))
    np.testing.assert_allclose(out.data, shifted.data, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8))
def test_l2_normalize_idempotent_property(seed, n):
    rng = np.random.default_rng(seed)
    x = ad.constant(rng.normal(size=(n, 4)) + 0.1)
    once = ad.l2_normalize_rows(x)
    twice = ad.l2_normalize_rows(once)
    np.testing.assert_allclose(once.data, twice.data, atol=1e-9)
