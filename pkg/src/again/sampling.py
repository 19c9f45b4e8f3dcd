"""Fixed-size neighborhood sampling and minibatch iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AttributedGraph


class SamplingError(ValueError):
    pass


def _adjacency_csr(g: AttributedGraph):
    """Flat neighbor array + offsets, cached on the graph object.

    Isolated nodes are given a single self-entry so every node has a
    non-empty draw pool.
    """
    cached = getattr(g, "_adjacency_csr_cache", None)
    if cached is not None:
        return cached
    pools = [
        nbrs if len(nbrs) else np.array([v], dtype=np.int64)
        for v, nbrs in enumerate(g.neighbors)
    ]
    flat = np.concatenate(pools)
    counts = np.array([len(p) for p in pools], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    cached = (flat, offsets, counts)
    object.__setattr__(g, "_adjacency_csr_cache", cached)
    return cached


@dataclass
class SampledBatch:
    """A batch of target nodes and their multi-depth sampled neighborhoods.

    ``level_nodes[l]`` holds the distinct node ids reached at depth l
    (``level_nodes[0]`` are the targets).  For each node at depth l-1, its
    neighbor slots at depth l are ``positions[l-1][offsets[l-1][i]:
    offsets[l-1][i+1]]``, indexing into ``level_nodes[l]``.  In sampled mode
    every slot range has exactly ``sample_sizes[l-1]`` entries; in exhaustive
    mode ranges are ragged (one slot per distinct neighbor).
    """

    targets: np.ndarray
    level_nodes: list[np.ndarray]
    positions: list[np.ndarray]
    offsets: list[np.ndarray]
    sample_sizes: list[int] | None

    @property
    def depth(self) -> int:
        return len(self.positions)

    def frontier_ids(self, k: int) -> list[np.ndarray]:
        """Sampled neighbor node ids at depth k, one array per depth-(k-1) node."""
        pos, off = self.positions[k - 1], self.offsets[k - 1]
        ids = self.level_nodes[k][pos]
        return [ids[off[i]: off[i + 1]] for i in range(len(off) - 1)]


def _build_levels(targets, sampler):
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise SamplingError("empty target batch")
    level_nodes = [targets]
    positions, offsets = [], []
    parents = targets
    depth = 0
    while True:
        sampled = sampler(parents, depth)
        if sampled is None:
            break
        flat, off = sampled
        uniq, inv = np.unique(flat, return_inverse=True)
        level_nodes.append(uniq)
        positions.append(inv.astype(np.int64))
        offsets.append(off)
        parents = uniq
        depth += 1
    return level_nodes, positions, offsets


def sample_neighborhood(
    g: AttributedGraph,
    targets,
    sizes: list[int],
    seed: int,
) -> SampledBatch:
    """Uniform with-replacement draws of ``sizes[k-1]`` neighbors per node at
    each depth; isolated nodes sample themselves."""
    if not sizes or any(s < 1 for s in sizes):
        raise SamplingError(f"sample sizes must be non-empty and >= 1, got {sizes}")
    flat_adj, adj_off, adj_counts = _adjacency_csr(g)
    rng = np.random.default_rng(seed)

    def sampler(parents, depth):
        if depth >= len(sizes):
            return None
        s = sizes[depth]
        draws = rng.integers(0, adj_counts[parents][:, None], size=(len(parents), s))
        flat = flat_adj[(adj_off[parents][:, None] + draws)].reshape(-1)
        off = np.arange(len(parents) + 1, dtype=np.int64) * s
        return flat, off

    level_nodes, positions, offsets = _build_levels(targets, sampler)
    return SampledBatch(
        targets=np.asarray(targets, dtype=np.int64),
        level_nodes=level_nodes,
        positions=positions,
        offsets=offsets,
        sample_sizes=list(sizes),
    )


def exhaustive_neighborhood(g: AttributedGraph, targets, depth: int) -> SampledBatch:
    """Deterministic variant: each distinct neighbor appears exactly once."""
    if depth < 1:
        raise SamplingError("depth must be >= 1")
    flat_adj, adj_off, adj_counts = _adjacency_csr(g)

    def sampler(parents, level):
        if level >= depth:
            return None
        pieces = [
            flat_adj[adj_off[p]: adj_off[p] + adj_counts[p]] for p in parents
        ]
        flat = np.concatenate(pieces)
        off = np.concatenate([[0], np.cumsum(adj_counts[parents])])
        return flat, off

    level_nodes, positions, offsets = _build_levels(targets, sampler)
    return SampledBatch(
        targets=np.asarray(targets, dtype=np.int64),
        level_nodes=level_nodes,
        positions=positions,
        offsets=offsets,
        sample_sizes=None,
    )


def iterate_batches(nodes, batch_size: int, seed: int, shuffle: bool = True):
    """Partition a (seeded) permutation of ``nodes`` into chunks of at most
    ``batch_size``; every node appears exactly once."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise SamplingError("cannot iterate over an empty node list")
    if batch_size < 1:
        raise SamplingError("batch_size must be >= 1")
    order = nodes.copy()
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    return [order[i: i + batch_size] for i in range(0, len(order), batch_size)]
