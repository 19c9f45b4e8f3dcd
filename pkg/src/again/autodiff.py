"""Reverse-mode automatic differentiation over dense numpy arrays.

Small tape-based engine: each operation returns a :class:`Tensor` holding the
forward value and a closure that routes the upstream gradient to its parents.
Only the operations needed by the encoder, classifier and discriminator are
provided.  Kernels run in the dtype of their inputs (float32 in training,
float64 in gradient checks); scalar reductions accumulate in float64.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


PROB_EPS = 1e-12       # probability clamp before any log
NORM_EPS = 1e-12       # denominator guard in row normalization


class Tensor:
    """A node in the backward tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, op="leaf"):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in parents
        )
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        g = np.asarray(g, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or g is self.data else g
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward() starts from a scalar loss")
        order: list[Tensor] = []
        seen = set()

        def visit(t: Tensor):
            stack = [(t, iter(t._parents))]
            seen.add(id(t))
            while stack:
                node, it = stack[-1]
                advanced = False
                for p in it:
                    if id(p) not in seen and p.requires_grad:
                        seen.add(id(p))
                        stack.append((p, iter(p._parents)))
                        advanced = True
                        break
                if not advanced:
                    order.append(node)
                    stack.pop()

        visit(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data))


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def _finite_or_raise(out: np.ndarray, op: str):
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite value produced by {op}")


def check_finite(t: Tensor, context: str = "") -> Tensor:
    _finite_or_raise(t.data, context or t.op)
    return t


def matmul(x: Tensor, w: Tensor) -> Tensor:
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"matmul: {x.shape} @ {w.shape}")
    out = Tensor(x.data @ w.data, parents=(x, w), op="matmul")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)

    out._backward = backward
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if b.data.shape != (x.data.shape[-1],):
        raise ShapeError(f"add_bias: {x.shape} + {b.shape}")
    out = Tensor(x.data + b.data, parents=(x, b), op="add_bias")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0, dtype=np.float64))

    out._backward = backward
    return out


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeError(f"add: {x.shape} + {y.shape}")
    out = Tensor(x.data + y.data, parents=(x, y), op="add")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if y.requires_grad:
            y._accumulate(g)

    out._backward = backward
    return out


def concat_rows(x: Tensor, y: Tensor) -> Tensor:
    """Row-wise concatenation: each output row is [x_row ; y_row]."""
    if x.data.shape[0] != y.data.shape[0]:
        raise ShapeError(f"concat_rows: {x.shape} vs {y.shape}")
    out = Tensor(np.concatenate([x.data, y.data], axis=1), parents=(x, y), op="concat_rows")
    split = x.data.shape[1]

    def backward(g):
        if x.requires_grad:
            x._accumulate(g[:, :split])
        if y.requires_grad:
            y._accumulate(g[:, split:])

    out._backward = backward
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = Tensor(np.where(x.data > 0, x.data, slope * x.data), parents=(x,), op="leaky_relu")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.where(x.data > 0, 1.0, slope))

    out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0), parents=(x,), op="relu")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = np.empty_like(x.data)
    pos = x.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s, parents=(x,), op="sigmoid")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 - s))

    out._backward = backward
    return out


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, parents=(x,), op="softmax_rows")

    def backward(g):
        if x.requires_grad:
            dot = (g * s).sum(axis=1, keepdims=True)
            x._accumulate(s * (g - dot))

    out._backward = backward
    return out


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    norms = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    denom = (norms + NORM_EPS).astype(x.data.dtype)
    y = x.data / denom
    out = Tensor(y, parents=(x,), op="l2_normalize_rows")

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=1, keepdims=True)
            x._accumulate((g - y * dot) / denom)

    out._backward = backward
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout rate {rate} outside [0, 1)")
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.data.dtype)
    out = Tensor(x.data * keep * scale, parents=(x,), op="dropout")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep * scale)

    out._backward = backward
    return out


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over rows, shape (D,)."""
    m = x.data.mean(axis=0, dtype=np.float64).astype(x.data.dtype)
    out = Tensor(m, parents=(x,), op="mean_rows")
    n = x.data.shape[0]

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / n, x.data.shape))

    out._backward = backward
    return out


def mean_all(x: Tensor) -> Tensor:
    m = np.asarray(x.data.mean(dtype=np.float64))
    out = Tensor(m, parents=(x,), op="mean_all")

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / x.data.size, x.data.shape))

    out._backward = backward
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c, parents=(x,), op="scale")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * c)

    out._backward = backward
    return out


def log_clipped(x: Tensor, lo: float = PROB_EPS, hi: float = 1.0 - PROB_EPS) -> Tensor:
    """log(clip(x, lo, hi)); gradient is zero where the clamp is active."""
    clipped = np.clip(x.data, lo, hi)
    out = Tensor(np.log(clipped), parents=(x,), op="log_clipped")
    inside = (x.data > lo) & (x.data < hi)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * inside / clipped)

    out._backward = backward
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start <= stop <= x.data.shape[0]:
        raise ShapeError(f"slice_rows [{start}:{stop}] of {x.shape}")
    out = Tensor(x.data[start:stop], parents=(x,), op="slice_rows")

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            acc[start:stop] = g
            x._accumulate(acc)

    out._backward = backward
    return out


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx], parents=(x,), op="gather_rows")

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data, dtype=np.float64)
            np.add.at(acc, idx, g)
            x._accumulate(acc)

    out._backward = backward
    return out


def _segment_ids(offsets: np.ndarray) -> np.ndarray:
    counts = np.diff(offsets)
    return np.repeat(np.arange(len(counts)), counts)


def segment_softmax(logits: Tensor, offsets: np.ndarray) -> Tensor:
    """Softmax within contiguous segments of a column vector.

    ``logits`` has shape (S, 1); ``offsets`` (n+1,) delimits n segments whose
    entries each normalize to sum 1.
    """
    if logits.data.ndim != 2 or logits.data.shape[1] != 1:
        raise ShapeError(f"segment_softmax expects (S, 1), got {logits.shape}")
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets[-1] != logits.data.shape[0]:
        raise ShapeError("segment offsets do not cover the logit vector")
    seg = _segment_ids(offsets)
    x = logits.data[:, 0]
    seg_max = np.full(len(offsets) - 1, -np.inf, dtype=x.dtype)
    np.maximum.at(seg_max, seg, x)
    e = np.exp(x - seg_max[seg])
    denom = np.zeros(len(offsets) - 1, dtype=np.float64)
    np.add.at(denom, seg, e)
    a = (e / denom[seg]).astype(x.dtype)
    out = Tensor(a[:, None], parents=(logits,), op="segment_softmax")

    def backward(g):
        if logits.requires_grad:
            gv = g[:, 0]
            dot = np.zeros(len(offsets) - 1, dtype=np.float64)
            np.add.at(dot, seg, gv * a)
            logits._accumulate((a * (gv - dot[seg]))[:, None])

    out._backward = backward
    return out


def segment_weighted_sum(
    weights: Tensor, source: Tensor, positions: np.ndarray, offsets: np.ndarray
) -> Tensor:
    """Per-segment weighted sum of source rows.

    Slot ``i`` contributes ``weights[i] * source[positions[i]]`` to its
    segment's output row.  Implemented as a sparse-matrix product so duplicate
    source rows are transformed once upstream and only combined here.
    """
    if weights.data.ndim != 2 or weights.data.shape[1] != 1:
        raise ShapeError(f"segment_weighted_sum expects (S, 1) weights, got {weights.shape}")
    positions = np.asarray(positions, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)
    if len(positions) != weights.data.shape[0] or offsets[-1] != len(positions):
        raise ShapeError("weights/positions/offsets are inconsistent")
    seg = _segment_ids(offsets)
    n_seg = len(offsets) - 1
    w = weights.data[:, 0]
    mat = sp.csr_matrix(
        (w.astype(np.float64), (seg, positions)),
        shape=(n_seg, source.data.shape[0]),
    )
    out_data = np.asarray(mat @ source.data.astype(np.float64)).astype(source.data.dtype)
    out = Tensor(out_data, parents=(weights, source), op="segment_weighted_sum")

    def backward(g):
        if source.requires_grad:
            grad_mat = sp.csr_matrix(
                (w.astype(np.float64), (seg, positions)),
                shape=(n_seg, source.data.shape[0]),
            )
            source._accumulate(np.asarray(grad_mat.T @ g.astype(np.float64)))
        if weights.requires_grad:
            gw = np.empty(len(positions), dtype=np.float64)
            chunk = max(1, 8_000_000 // max(1, source.data.shape[1]))
            for start in range(0, len(positions), chunk):
                end = min(start + chunk, len(positions))
                gw[start:end] = np.einsum(
                    "ij,ij->i",
                    g[seg[start:end]].astype(np.float64),
                    source.data[positions[start:end]].astype(np.float64),
                )
            weights._accumulate(gw[:, None])

    out._backward = backward
    return out


def cross_entropy(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of per-row softmax outputs.

    ``scores`` rows must already be probability vectors; they are clamped at
    ``PROB_EPS`` before the log.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, c = scores.data.shape
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: {n} rows but {labels.shape} labels")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeError(f"label out of range for {c} classes")
    row_sums = scores.data.sum(axis=1, dtype=np.float64)
    if np.any(np.abs(row_sums - 1.0) > 1e-5):
        raise ShapeError("cross_entropy expects rows summing to 1")
    picked = np.clip(scores.data[np.arange(n), labels], PROB_EPS, None)
    loss = -np.log(picked.astype(np.float64)).mean()
    _finite_or_raise(np.asarray(loss), "cross_entropy")
    out = Tensor(np.asarray(loss), parents=(scores,), op="cross_entropy")

    def backward(g):
        if scores.requires_grad:
            grad = np.zeros_like(scores.data, dtype=np.float64)
            inside = scores.data[np.arange(n), labels] > PROB_EPS
            grad[np.arange(n), labels] = -float(g) * inside / (picked * n)
            scores._accumulate(grad)

    out._backward = backward
    return out


def grad_check(forward, params: list[Tensor], tolerance: float, step: float = 1e-4):
    """Compare analytic gradients with central finite differences.

    ``forward`` is a deterministic closure returning a scalar :class:`Tensor`
    computed from ``params``.  Returns a per-parameter report and the overall
    maximum relative error; relative error uses ``max(|a|, |n|, 1)`` as the
    denominator.
    """
    for p in params:
        p.zero_grad()
    loss = forward()
    loss.backward()
    analytic = [np.array(p.grad, dtype=np.float64) if p.grad is not None
                else np.zeros_like(p.data, dtype=np.float64) for p in params]

    report = []
    worst = 0.0
    for p, a in zip(params, analytic):
        numeric = np.zeros_like(a)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(forward().data)
            flat[i] = orig - step
            down = float(forward().data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1.0)
        err = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
        worst = max(worst, err)
        report.append({"shape": tuple(p.shape), "max_rel_error": err})
    return {"params": report, "max_rel_error": worst, "passed": worst < tolerance}
