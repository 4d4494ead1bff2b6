import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ginret.text_graph import EmbeddingTable, Vocabulary, graph_from_adjacency, knn_adjacency

settings.register_profile(
    "default", deadline=None, derandomize=True, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


def random_knn_graph(rng, n, k, dim=5, lambda_max=None):
    words = tuple(f"w{i}" for i in range(n))
    emb = EmbeddingTable(words, rng.normal(size=(n, dim)))
    return graph_from_adjacency(Vocabulary(words), knn_adjacency(emb, k), k, lambda_max)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def permute_case(model, graph, feats, perm):
    """Relabel vertex i as perm[i] in the graph, the features and text_fc rows."""
    from ginret.linalg import SparseSym
    from ginret.text_graph import Vocabulary, graph_from_adjacency

    n = graph.n
    inv = np.argsort(perm)
    a = graph.adjacency
    adj = SparseSym.from_triplets(n, perm[a.row_ids()], perm[a.col_indices], a.values)
    words = tuple(graph.vocab.words[i] for i in inv)
    g2 = graph_from_adjacency(Vocabulary(words), adj, graph.k, graph.lambda_max)
    m2 = model.copy()
    c2 = model.text_conv2.out_channels
    w = model.text_fc.weight.reshape(n, c2, -1)
    m2.text_fc.weight[...] = w[inv].reshape(n * c2, -1)
    return m2, g2, np.asarray(feats)[:, inv]
