"""Attention-based neighborhood encoder, output classifier and ablation variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import AttributedGraph
from .params import ParameterSet
from .sampling import SampledBatch

LEAKY_SLOPE = 0.2

AGGREGATOR_KINDS = ("attention", "mean", "none-mlp")


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    depth: int = 2
    hidden_dim: int = 256
    attention_vector_dim: int = 512
    aggregator_kind: str = "attention"
    attention_heads: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.hidden_dim < 1 or self.attention_vector_dim < 1:
            raise ConfigError("dimensions must be >= 1")
        if self.hidden_dim % 2 != 0:
            raise ConfigError("hidden_dim must be even (self/neighbor halves)")
        if self.attention_vector_dim % 2 != 0:
            raise ConfigError("attention_vector_dim must be even")
        if self.aggregator_kind not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown aggregator_kind {self.aggregator_kind!r}")
        if self.attention_heads != 1:
            raise ConfigError("only single-head attention is supported")


@dataclass
class EmbeddingBatch:
    """L2-normalized embedding rows for a batch of nodes."""

    nodes: np.ndarray
    vectors: Tensor

    @property
    def matrix(self) -> np.ndarray:
        return self.vectors.data


def attention_coefficients(
    h_targets: Tensor,
    h_neighbors: Tensor,
    positions: np.ndarray,
    offsets: np.ndarray,
    layer: dict[str, Tensor],
) -> Tensor:
    """Softmax-normalized neighbor weights, one column vector over all slots.

    Slot logit for target v and neighbor u is
    leaky_relu(a . [W h_v ; W h_u]); normalization is per target.
    """
    w, a = layer["W"], layer["a"]
    att_half = w.data.shape[1]
    if a.data.shape[0] != 2 * att_half:
        raise ad.ShapeError("attention vector does not match 2x transform width")
    a_self = ad.slice_rows(a, 0, att_half)
    a_nbr = ad.slice_rows(a, att_half, 2 * att_half)
    logit_t = ad.matmul(ad.matmul(h_targets, w), a_self)
    logit_n = ad.matmul(ad.matmul(h_neighbors, w), a_nbr)
    seg = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    slot_logits = ad.add(ad.gather_rows(logit_t, seg), ad.gather_rows(logit_n, positions))
    return ad.segment_softmax(ad.leaky_relu(slot_logits, LEAKY_SLOPE), offsets)


def uniform_coefficients(positions: np.ndarray, offsets: np.ndarray) -> Tensor:
    counts = np.diff(offsets)
    weights = (1.0 / np.repeat(counts, counts)).astype(np.float64)
    return ad.constant(weights[:, None])


def aggregate(
    h_neighbors: Tensor,
    coefficients: Tensor,
    positions: np.ndarray,
    offsets: np.ndarray,
) -> Tensor:
    """Per-target combination of neighbor representations with the given
    slot weights (attention coefficients or uniform)."""
    return ad.segment_weighted_sum(coefficients, h_neighbors, positions, offsets)


def layer_forward(
    h_targets: Tensor,
    h_neighbors: Tensor,
    positions: np.ndarray,
    offsets: np.ndarray,
    layer: dict[str, Tensor],
    kind: str,
    dropout_rate: float,
    rng: np.random.Generator,
    train: bool,
) -> Tensor:
    """One aggregation step: [Wv h_v ; Ws h_S] -> ReLU -> row normalization."""
    h_t = ad.dropout(h_targets, dropout_rate, rng, train)
    h_n = ad.dropout(h_neighbors, dropout_rate, rng, train)
    if kind == "attention":
        alpha = attention_coefficients(h_t, h_n, positions, offsets, layer)
    elif kind == "mean":
        alpha = uniform_coefficients(positions, offsets)
    else:
        raise ConfigError(f"aggregator kind {kind!r} has no aggregation layer")
    h_s = aggregate(h_n, alpha, positions, offsets)
    pre = ad.concat_rows(ad.matmul(h_t, layer["Wv"]), ad.matmul(h_s, layer["Ws"]))
    return ad.l2_normalize_rows(ad.relu(pre))


def encode(
    g: AttributedGraph,
    batch: SampledBatch,
    params: ParameterSet,
    cfg: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.0,
) -> EmbeddingBatch:
    """Depth-K inward aggregation over the sampled neighborhood structure.

    Depth-0 representations are the raw node features; the step-k layer maps
    the step-(k-1) representations of every level still needed.
    """
    if batch.depth != cfg.depth:
        raise ConfigError(
            f"batch sampled to depth {batch.depth}, encoder expects {cfg.depth}"
        )
    if cfg.aggregator_kind == "none-mlp":
        raise ConfigError("encode is undefined for the features-only variant")
    if train and rng is None:
        raise ConfigError("training-mode encode needs an rng for dropout")
    rng = rng or np.random.default_rng(0)
    dtype = next(iter(params.tensors.values())).data.dtype
    reps = [
        ad.constant(np.ascontiguousarray(g.features[nodes], dtype=dtype))
        for nodes in batch.level_nodes
    ]
    for k in range(1, cfg.depth + 1):
        layer = params.layer(k)
        reps = [
            layer_forward(
                reps[level],
                reps[level + 1],
                batch.positions[level],
                batch.offsets[level],
                layer,
                cfg.aggregator_kind,
                dropout_rate,
                rng,
                train,
            )
            for level in range(cfg.depth - k + 1)
        ]
    return EmbeddingBatch(nodes=batch.targets, vectors=reps[0])


def classify(emb: EmbeddingBatch, params: ParameterSet) -> Tensor:
    """Softmax class scores for each embedded node."""
    return ad.softmax_rows(
        ad.add_bias(ad.matmul(emb.vectors, params.tensors["cls.W"]), params.tensors["cls.b"])
    )


def predict(scores: Tensor) -> np.ndarray:
    return scores.data.argmax(axis=1)


def mlp_forward(
    features: Tensor,
    params: ParameterSet,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.0,
) -> Tensor:
    """Two-layer features-only baseline: D -> hidden -> C softmax."""
    if "mlp.W1" not in params.tensors:
        raise ConfigError("parameter set was not initialized for mlp mode")
    if train and rng is None:
        raise ConfigError("training-mode mlp_forward needs an rng for dropout")
    rng = rng or np.random.default_rng(0)
    x = ad.dropout(features, dropout_rate, rng, train)
    hidden = ad.relu(ad.add_bias(ad.matmul(x, params.tensors["mlp.W1"]), params.tensors["mlp.b1"]))
    hidden = ad.dropout(hidden, dropout_rate, rng, train)
    return ad.softmax_rows(
        ad.add_bias(ad.matmul(hidden, params.tensors["cls.W"]), params.tensors["cls.b"])
    )
