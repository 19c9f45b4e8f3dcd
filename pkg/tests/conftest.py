import numpy as np
import pytest

from again.graph import AttributedGraph

CRITERION_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    """Register one acceptance-criterion verdict for the end-of-run summary."""
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    CRITERION_LINES.append(line)
    print(line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)


def build_graph(edges, features, labels, class_count=None, ids=None):
    """Assemble an AttributedGraph from an undirected edge list."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    adjacency = [set() for _ in range(n)]
    for u, v in edges:
        if u != v:
            adjacency[u].add(v)
            adjacency[v].add(u)
    return AttributedGraph(
        ids=ids or [str(i) for i in range(n)],
        features=features,
        labels=labels,
        class_count=class_count if class_count is not None else int(labels.max()) + 1,
        neighbors=[np.array(sorted(s), dtype=np.int64) for s in adjacency],
    )


def random_graph(n=40, feature_dim=6, class_count=3, degree=3, seed=0):
    rng = np.random.default_rng(seed)
    edges = []
    for v in range(n):
        for u in rng.choice(n, size=degree, replace=False):
            edges.append((v, int(u)))
    return build_graph(
        edges,
        rng.normal(size=(n, feature_dim)),
        rng.integers(0, class_count, size=n),
        class_count=class_count,
    )


@pytest.fixture
def line_graph():
    """0 - 1 - 2 - 3 path with distinguishable features."""
    feats = np.eye(4, dtype=np.float32)
    return build_graph([(0, 1), (1, 2), (2, 3)], feats, [0, 1, 0, 1])


@pytest.fixture
def small_graph():
    return random_graph(seed=7)
