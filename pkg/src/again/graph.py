"""Attributed-graph data model, text-format ingestion, splits and feature noise."""

from __future__ import annotations

import gzip
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class CapacityError(DataError):
    """Split request exceeds the available nodes."""


def _open_text(path, mode="rt"):
    # .gz is accepted transparently; the decompressed stream is the documented format.
    if str(path).endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")


@dataclass
class AttributedGraph:
    """Undirected graph with dense node features and (possibly partial) labels.

    ``labels[v]`` is a class index in ``[0, class_count)`` or -1 for unlabeled
    nodes.  ``neighbors[v]`` is a sorted, duplicate-free array of neighbor
    indices; both directions of every edge are stored.  Instances are treated
    as immutable after construction.
    """

    ids: list[str]
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    neighbors: list[np.ndarray]
    id_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id_index:
            self.id_index = {nid: i for i, nid in enumerate(self.ids)}
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features.setflags(write=False)
        self.labels.setflags(write=False)
        for nbrs in self.neighbors:
            nbrs.setflags(write=False)
        self.validate()

    @property
    def node_count(self) -> int:
        return len(self.ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def edge_count(self) -> int:
        """Number of undirected edges, each counted once."""
        return sum(len(n) for n in self.neighbors) // 2

    def validate(self):
        n = self.node_count
        if n <= 0:
            raise DataError("graph must contain at least one node")
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise DataError("features/labels row count does not match node count")
        if self.class_count <= 0:
            raise DataError("class_count must be positive")
        labeled = self.labels[self.labels >= 0]
        if labeled.size and labeled.max() >= self.class_count:
            raise DataError(
                f"label index {int(labeled.max())} out of range for "
                f"{self.class_count} classes"
            )
        if len(self.neighbors) != n:
            raise DataError("adjacency list count does not match node count")
        for v, nbrs in enumerate(self.neighbors):
            if len(nbrs) == 0:
                continue
            if nbrs.min() < 0 or nbrs.max() >= n:
                raise DataError(f"node {v}: neighbor index out of range")
            if np.any(np.diff(nbrs) <= 0):
                raise DataError(f"node {v}: neighbor list not sorted/deduplicated")
        # Symmetry check via edge-set comparison (cheap, set-based).
        fwd = {(v, int(u)) for v, nbrs in enumerate(self.neighbors) for u in nbrs}
        if any((u, v) not in fwd for v, u in fwd):
            raise DataError("adjacency is not symmetric")

    def average_degree(self) -> float:
        """2|E|/N with every undirected edge counted once."""
        return 2.0 * self.edge_count / self.node_count

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def with_features(self, features: np.ndarray) -> "AttributedGraph":
        """Copy of the graph with a replacement feature matrix."""
        return AttributedGraph(
            ids=self.ids,
            features=features,
            labels=self.labels,
            class_count=self.class_count,
            neighbors=self.neighbors,
            id_index=self.id_index,
        )


def load_graph(edges_path, features_path, labels_path) -> AttributedGraph:
    """Read a graph from the three-file text format.

    Node universe and ordering come from the features file.  Edge lists are
    symmetrized and deduplicated; self-loops are dropped.
    """
    ids: list[str] = []
    rows: list[np.ndarray] = []
    dim = None
    with _open_text(features_path) as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            nid, values = parts[0], parts[1:]
            if not values:
                raise ParseError(features_path, line_no, "node has no feature values")
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ParseError(
                    features_path,
                    line_no,
                    f"expected {dim} feature values, got {len(values)}",
                )
            try:
                row = np.array(values, dtype=np.float32)
            except ValueError as exc:
                raise ParseError(features_path, line_no, f"bad feature value: {exc}")
            ids.append(nid)
            rows.append(row)
    if not ids:
        raise DataError(f"{features_path}: no nodes found")
    if len(set(ids)) != len(ids):
        raise DataError(f"{features_path}: duplicate node ids")
    index = {nid: i for i, nid in enumerate(ids)}
    features = np.vstack(rows)

    n = len(ids)
    labels = np.full(n, -1, dtype=np.int64)
    max_label = -1
    with _open_text(labels_path) as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(labels_path, line_no, "expected '<id> <class_index>'")
            nid, raw = parts
            if nid not in index:
                raise ParseError(labels_path, line_no, f"unknown node id {nid!r}")
            try:
                cls = int(raw)
            except ValueError:
                raise ParseError(labels_path, line_no, f"bad class index {raw!r}")
            if cls < 0:
                raise ParseError(labels_path, line_no, f"negative class index {cls}")
            labels[index[nid]] = cls
            max_label = max(max_label, cls)
    if max_label < 0:
        raise DataError(f"{labels_path}: no labeled nodes")

    adjacency: list[set[int]] = [set() for _ in range(n)]
    with _open_text(edges_path) as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(edges_path, line_no, "expected '<id_u> <id_v>'")
            a, b = parts
            if a not in index or b not in index:
                missing = a if a not in index else b
                raise ParseError(edges_path, line_no, f"unknown node id {missing!r}")
            u, v = index[a], index[b]
            if u == v:
                continue
            adjacency[u].add(v)
            adjacency[v].add(u)
    neighbors = [np.array(sorted(s), dtype=np.int64) for s in adjacency]

    return AttributedGraph(
        ids=ids,
        features=features,
        labels=labels,
        class_count=max_label + 1,
        neighbors=neighbors,
        id_index=index,
    )


def _format_value(x: np.float32) -> str:
    f = float(x)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    # Shortest decimal string that round-trips through float32.
    return np.format_float_positional(np.float32(f), unique=True, trim="-")


def save_graph(g: AttributedGraph, edges_path, features_path, labels_path):
    """Write the graph in the same text format that load_graph reads."""
    with _open_text(edges_path, "wt") as fh:
        for v, nbrs in enumerate(g.neighbors):
            for u in nbrs:
                if v < u:
                    fh.write(f"{g.ids[v]} {g.ids[u]}\n")
    with _open_text(features_path, "wt") as fh:
        for v in range(g.node_count):
            row = " ".join(_format_value(x) for x in g.features[v])
            fh.write(f"{g.ids[v]} {row}\n")
    with _open_text(labels_path, "wt") as fh:
        for v in range(g.node_count):
            if g.labels[v] >= 0:
                fh.write(f"{g.ids[v]} {int(g.labels[v])}\n")


@dataclass(frozen=True)
class NodeSplit:
    """Disjoint role assignment: labeled / observed-unlabeled / unseen test."""

    labeled: frozenset[int]
    observed_unlabeled: frozenset[int]
    unseen_test: frozenset[int]

    def validate(self, g: AttributedGraph):
        sets = [self.labeled, self.observed_unlabeled, self.unseen_test]
        total = sum(len(s) for s in sets)
        union = self.labeled | self.observed_unlabeled | self.unseen_test
        if len(union) != total:
            raise DataError("split roles overlap")
        if union and (min(union) < 0 or max(union) >= g.node_count):
            raise DataError("split contains node index out of range")
        if not self.unseen_test:
            raise DataError("inductive split requires a non-empty test set")
        for v in self.labeled:
            if g.labels[v] < 0:
                raise DataError(f"labeled-role node {v} has no label")

    @property
    def observed(self) -> frozenset[int]:
        """All nodes visible during training."""
        return self.labeled | self.observed_unlabeled


def make_split(
    g: AttributedGraph,
    labeled_per_class: int,
    test_count: int,
    seed: int,
) -> NodeSplit:
    """Random split: ``labeled_per_class`` labeled nodes per class, a uniform
    test draw from the remaining labeled nodes, everything else observed."""
    if labeled_per_class <= 0 or test_count <= 0:
        raise DataError("labeled_per_class and test_count must be positive")
    rng = np.random.default_rng(seed)
    labeled: list[int] = []
    for cls in range(g.class_count):
        candidates = np.flatnonzero(g.labels == cls)
        if len(candidates) < labeled_per_class:
            raise CapacityError(
                f"class {cls} has {len(candidates)} labeled nodes, "
                f"need {labeled_per_class}"
            )
        labeled.extend(rng.choice(candidates, size=labeled_per_class, replace=False))
    labeled_set = frozenset(int(v) for v in labeled)
    # Test nodes need ground truth at evaluation time, so the uniform draw is
    # over the labeled remainder (identical to "the remainder" on fully
    # labeled graphs).
    pool = np.array(
        sorted(
            v
            for v in np.flatnonzero(g.labels >= 0)
            if int(v) not in labeled_set
        ),
        dtype=np.int64,
    )
    if len(pool) < test_count:
        raise CapacityError(
            f"only {len(pool)} nodes available for a test draw of {test_count}"
        )
    test = frozenset(int(v) for v in rng.choice(pool, size=test_count, replace=False))
    observed = frozenset(
        v for v in range(g.node_count) if v not in labeled_set and v not in test
    )
    split = NodeSplit(labeled_set, observed, test)
    split.validate(g)
    return split


_SPLIT_SECTIONS = {"#labeled": "labeled", "#observed": "observed", "#test": "test"}


def load_fixed_split(path, g: AttributedGraph) -> NodeSplit:
    """Read a designated split from its three-section text file."""
    roles: dict[str, list[int]] = {"labeled": [], "observed": [], "test": []}
    current = None
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, 1):
            token = line.strip()
            if not token:
                continue
            if token in _SPLIT_SECTIONS:
                current = _SPLIT_SECTIONS[token]
                continue
            if current is None:
                raise ParseError(path, line_no, "node id before any section header")
            if token not in g.id_index:
                raise ParseError(path, line_no, f"unknown node id {token!r}")
            roles[current].append(g.id_index[token])
    split = NodeSplit(
        labeled=frozenset(roles["labeled"]),
        observed_unlabeled=frozenset(roles["observed"]),
        unseen_test=frozenset(roles["test"]),
    )
    split.validate(g)
    return split


def save_split(split: NodeSplit, path, g: AttributedGraph):
    with _open_text(path, "wt") as fh:
        for header, members in (
            ("#labeled", split.labeled),
            ("#observed", split.observed_unlabeled),
            ("#test", split.unseen_test),
        ):
            fh.write(header + "\n")
            for v in sorted(members):
                fh.write(g.ids[v] + "\n")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian feature corruption: scale ``noise_ratio``, applied to
    a ``node_fraction`` share of nodes chosen uniformly without replacement."""

    noise_ratio: float
    node_fraction: float
    seed: int

    def __post_init__(self):
        if self.noise_ratio < 0:
            raise DataError("noise_ratio must be non-negative")
        if not 0.0 <= self.node_fraction <= 1.0:
            raise DataError("node_fraction must be in [0, 1]")


def reference_amplitude(g: AttributedGraph) -> float:
    """Mean over nodes of the maximum feature value of each node."""
    return float(np.mean(g.features.max(axis=1, initial=-np.inf), dtype=np.float64))


def inject_feature_noise(
    g: AttributedGraph,
    spec: NoiseSpec,
    eligible: np.ndarray | None = None,
    amplitude: float | None = None,
) -> AttributedGraph:
    """Return a copy of ``g`` with seeded Gaussian noise added to the feature
    rows of floor(node_fraction * pool) uniformly chosen nodes.

    The per-entry perturbation is ``noise_ratio * r * eps`` with ``r`` the
    reference amplitude (of the clean graph unless ``amplitude`` is supplied
    by a sweep that computed it once) and ``eps`` standard normal.  The pool
    defaults to all nodes; ``eligible`` restricts it.  For a fixed seed the
    selected nodes do not depend on ``noise_ratio``, so a scale sweep
    perturbs one fixed node set.
    """
    pool = (
        np.arange(g.node_count, dtype=np.int64)
        if eligible is None
        else np.asarray(eligible, dtype=np.int64)
    )
    count = int(spec.node_fraction * len(pool))
    features = np.array(g.features, dtype=np.float32)
    rng = np.random.default_rng(spec.seed)
    chosen = pool[rng.choice(len(pool), size=count, replace=False)]
    if count > 0 and spec.noise_ratio > 0:
        r = reference_amplitude(g) if amplitude is None else amplitude
        eps = rng.standard_normal((count, g.feature_dim))
        features[np.sort(chosen)] += np.float32(spec.noise_ratio * r) * eps.astype(
            np.float32
        )
    return g.with_features(features)
