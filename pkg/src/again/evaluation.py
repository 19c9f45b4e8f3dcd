"""Inductive test-time evaluation: accuracy, cluster separation, noise sweeps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import (
    AttributedGraph,
    DataError,
    NodeSplit,
    NoiseSpec,
    inject_feature_noise,
    reference_amplitude,
)
from .model import EncoderConfig, classify, encode, mlp_forward, predict
from .params import ParameterSet
from .sampling import sample_neighborhood
from .training import TrainConfig


def _score_nodes(g, nodes, params, cfg: TrainConfig, rng) -> np.ndarray:
    if cfg.mode == "mlp":
        dtype = params.tensors["cls.W"].data.dtype
        feats = ad.constant(np.ascontiguousarray(g.features[nodes], dtype=dtype))
        return mlp_forward(feats, params).data
    batch = sample_neighborhood(
        g, nodes, cfg.sample_sizes, seed=int(rng.integers(2**63))
    )
    emb = encode(g, batch, params, cfg.encoder)
    return classify(emb, params).data


def embed_nodes(
    g: AttributedGraph, nodes, params: ParameterSet, cfg: TrainConfig, seed: int
) -> np.ndarray:
    """Embedding matrix for the given nodes with evaluation-time sampling."""
    rng = np.random.default_rng(seed)
    nodes = np.asarray(nodes, dtype=np.int64)
    out = np.empty((len(nodes), cfg.encoder.hidden_dim), dtype=np.float32)
    for start in range(0, len(nodes), cfg.batch_size):
        chunk = nodes[start: start + cfg.batch_size]
        batch = sample_neighborhood(
            g, chunk, cfg.sample_sizes, seed=int(rng.integers(2**63))
        )
        out[start: start + len(chunk)] = encode(
            g, batch, params, cfg.encoder
        ).matrix
    return out


def evaluate_accuracy(
    g_full: AttributedGraph,
    split: NodeSplit,
    params: ParameterSet,
    cfg: TrainConfig,
    seed: int,
) -> float:
    """Fraction of unseen test nodes classified correctly, encoding them over
    the full graph (test phase re-adds the held-out nodes and edges)."""
    nodes = np.array(sorted(split.unseen_test), dtype=np.int64)
    labels = g_full.labels[nodes]
    if np.any(labels < 0):
        bad = nodes[labels < 0][0]
        raise DataError(f"test node {bad} has no ground-truth label")
    rng = np.random.default_rng(seed)
    correct = 0
    for start in range(0, len(nodes), cfg.batch_size):
        chunk = nodes[start: start + cfg.batch_size]
        scores = _score_nodes(g_full, chunk, params, cfg, rng)
        correct += int(np.sum(scores.argmax(axis=1) == g_full.labels[chunk]))
    return correct / len(nodes)


def silhouette(embeddings: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient with Euclidean distances.

    Per point: s = (b - a) / max(a, b), a = mean distance to its own class
    (excluding itself), b = smallest mean distance to any other class.
    Points in singleton classes score 0.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or len(labels) != x.shape[0]:
        raise DataError("embeddings/labels shape mismatch")
    if x.shape[0] < 2:
        raise DataError("silhouette needs at least 2 points")
    classes, inverse = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise DataError("silhouette needs at least 2 distinct classes")
    n, c = x.shape[0], len(classes)
    # direct differences, block by block: the gram-matrix shortcut loses
    # enough precision to matter for near-duplicate points
    dist = np.empty((n, n))
    block = max(1, 4_000_000 // max(1, n * x.shape[1]))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = x[start:stop, None, :] - x[None, :, :]
        dist[start:stop] = np.sqrt((diff * diff).sum(axis=2))
    members = np.zeros((n, c))
    members[np.arange(n), inverse] = 1.0
    class_sizes = members.sum(axis=0)
    sums = dist @ members  # (n, c): total distance from each point to each class

    own = inverse
    own_size = class_sizes[own]
    scores = np.zeros(n)
    multi = own_size > 1
    a = np.zeros(n)
    a[multi] = sums[np.arange(n), own][multi] / (own_size[multi] - 1)
    mean_other = sums / np.maximum(class_sizes, 1)[None, :]
    mean_other[np.arange(n), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    valid = multi & (denom > 0)
    scores[valid] = (b[valid] - a[valid]) / denom[valid]
    return float(scores.mean())


def top2_pca(embeddings: np.ndarray) -> np.ndarray:
    """Projection onto the top-2 principal components."""
    x = np.asarray(embeddings, dtype=np.float64)
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    return x @ vt[:2].T


@dataclass
class RobustnessReport:
    """Accuracy grid over (noise ratio, node fraction), per-cell seed list."""

    mode: str
    lambdas: list[float]
    etas: list[float]
    seeds: list[int]
    accuracies: np.ndarray  # (len(lambdas), len(etas), len(seeds))

    def mean(self) -> np.ndarray:
        return self.accuracies.mean(axis=2)

    def std(self) -> np.ndarray:
        return self.accuracies.std(axis=2)

    def to_csv(self) -> str:
        lines = ["lambda," + ",".join(f"eta={e:g}" for e in self.etas)]
        means = self.mean()
        for i, lam in enumerate(self.lambdas):
            lines.append(f"{lam:g}," + ",".join(f"{v:.6f}" for v in means[i]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "lambdas": self.lambdas,
                "etas": self.etas,
                "seeds": self.seeds,
                "mean": self.mean().tolist(),
                "std": self.std().tolist(),
                "accuracies": self.accuracies.tolist(),
            },
            indent=2,
            sort_keys=True,
        )


@dataclass
class GapReport:
    """Per-cell accuracy difference between a candidate and the attention
    reference under identical noise conditions."""

    candidate_mode: str
    lambdas: list[float]
    etas: list[float]
    delta: np.ndarray

    def to_csv(self) -> str:
        lines = ["lambda," + ",".join(f"eta={e:g}" for e in self.etas)]
        for i, lam in enumerate(self.lambdas):
            lines.append(f"{lam:g}," + ",".join(f"{v:+.6f}" for v in self.delta[i]))
        return "\n".join(lines) + "\n"


def robustness_sweep(
    g: AttributedGraph,
    split: NodeSplit,
    trained: dict[str, tuple[ParameterSet, TrainConfig]],
    lambdas: list[float],
    etas: list[float],
    seeds: list[int],
    noise_on_test_only: bool = False,
    resample_noise_per_lambda: bool = False,
) -> dict[str, RobustnessReport]:
    """Evasion protocol: corrupt features of the full test-time graph, then
    re-evaluate every trained model unchanged on each (lambda, eta, seed).

    The reference amplitude is computed once on the clean graph.  For a fixed
    (eta, seed) the corrupted node set is held fixed across the lambda sweep
    unless ``resample_noise_per_lambda`` is set.
    """
    amplitude = reference_amplitude(g)
    eligible = (
        np.array(sorted(split.unseen_test), dtype=np.int64)
        if noise_on_test_only
        else None
    )
    reports = {}
    noisy_cache: dict[tuple, AttributedGraph] = {}
    for mode, (params, cfg) in trained.items():
        acc = np.zeros((len(lambdas), len(etas), len(seeds)))
        for j, eta in enumerate(etas):
            for s_idx, seed in enumerate(seeds):
                for i, lam in enumerate(lambdas):
                    noise_seed = (
                        hash((seed, eta, lam)) & 0x7FFFFFFF
                        if resample_noise_per_lambda
                        else hash((seed, eta)) & 0x7FFFFFFF
                    )
                    key = (lam, eta, noise_seed)
                    if key not in noisy_cache:
                        noisy_cache[key] = inject_feature_noise(
                            g,
                            NoiseSpec(lam, eta, noise_seed),
                            eligible=eligible,
                            amplitude=amplitude,
                        )
                    acc[i, j, s_idx] = evaluate_accuracy(
                        noisy_cache[key], split, params, cfg, seed=seed
                    )
        reports[mode] = RobustnessReport(
            mode=mode,
            lambdas=list(lambdas),
            etas=list(etas),
            seeds=list(seeds),
            accuracies=acc,
        )
    return reports


def performance_gap(candidate: RobustnessReport, reference: RobustnessReport) -> GapReport:
    """Cellwise candidate-minus-reference accuracy difference."""
    if candidate.lambdas != reference.lambdas or candidate.etas != reference.etas:
        raise DataError("robustness grids do not match")
    return GapReport(
        candidate_mode=candidate.mode,
        lambdas=list(candidate.lambdas),
        etas=list(candidate.etas),
        delta=candidate.mean() - reference.mean(),
    )
