import itertools
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ginret.linalg import SparseSym, dense_eigh, spmv
from ginret.text_graph import (EmbeddingTable, TextSample, Vocabulary, build_text_graph, build_vocabulary,
                               knn_adjacency, load_embeddings, load_graph, load_vocabulary, normalized_laplacian,
                               save_embeddings, save_graph, save_vocabulary, scale_laplacian, vectorize_text)

from conftest import random_knn_graph


def table(vectors):
    vectors = np.asarray(vectors, dtype=float)
    return EmbeddingTable(tuple(f"w{i}" for i in range(len(vectors))), vectors)


def edge_set(a: SparseSym):
    rows = a.row_ids()
    return {(int(i), int(j)) for i, j in zip(rows, a.col_indices) if i < j}


def exact_cos_key(a, b):
    """sign(cos) * cos^2 as an exact rational; monotone in the cosine."""
    dot = sum(Fraction(x) * Fraction(y) for x, y in zip(a, b))
    na = sum(Fraction(x) ** 2 for x in a)
    nb = sum(Fraction(y) ** 2 for y in b)
    return (1 if dot >= 0 else -1) * dot * dot / (na * nb)


def brute_knn_edges(vectors, k):
    """Neighbour sets by explicit sort on (-cosine, index), in exact arithmetic."""
    v = [[float(x) for x in row] for row in vectors]
    n = len(v)
    edges = set()
    for i in range(n):
        ranked = sorted((j for j in range(n) if j != i), key=lambda j: (-exact_cos_key(v[i], v[j]), j))
        for j in ranked[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def test_vocabulary_frequency_then_lexicographic():
    v = build_vocabulary([["a", "b", "a"], ["b", "c"]], max_words=2)
    assert v.words == ("a", "b")


def test_vocabulary_all_words():
    v = build_vocabulary([["a", "b", "a"], ["b", "c"]], max_words=10)
    assert v.words == ("a", "b", "c")
    assert v.counts == (2, 2, 1)


def test_vocabulary_min_doc_freq_filters_everything():
    with pytest.raises(ValueError):
        build_vocabulary([["a", "b"], ["b", "c"]], max_words=5, min_doc_freq=3)


def test_vocabulary_empty_corpus():
    with pytest.raises(ValueError):
        build_vocabulary([], max_words=5)


def test_vocabulary_invariants():
    with pytest.raises(ValueError):
        Vocabulary(("a", "a"))
    with pytest.raises(ValueError):
        Vocabulary(("a",))
    v = Vocabulary(("x", "y", "z"))
    assert [v.index[w] for w in v.words] == [0, 1, 2]


def test_embedding_rejects_zero_vector():
    with pytest.raises(ValueError):
        table([[1.0, 0.0], [0.0, 0.0]])


def test_knn_three_points():
    a = knn_adjacency(table([[1, 0], [0.9, 0.1], [0, 1]]), 1)
    assert edge_set(a) == {(0, 1), (1, 2)}


def test_knn_complete_graph(rng):
    a = knn_adjacency(table(rng.normal(size=(6, 3))), 5)
    assert edge_set(a) == set(itertools.combinations(range(6), 2))


def test_knn_identical_vectors_are_mutual_neighbours():
    vecs = [[1.0, 0.2], [0.0, 1.0], [1.0, 0.2], [-1.0, 0.3]]
    a = knn_adjacency(table(vecs), 1)
    assert (0, 2) in edge_set(a)
    assert edge_set(a) == brute_knn_edges(vecs, 1)


@pytest.mark.parametrize("k", [0, 4])
def test_knn_k_out_of_range(k):
    with pytest.raises(ValueError):
        knn_adjacency(table(np.eye(4) + 0.1), k)


@given(st.integers(2, 20), st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_knn_structure_and_scale_invariance(n, k, seed, scale):
    k = min(k, n - 1)
    rng = np.random.default_rng(seed)
    # small integer coordinates make cosine ties likely
    vecs = rng.integers(-2, 3, size=(n, 3)).astype(float)
    vecs[np.abs(vecs).sum(1) == 0, 0] = 1.0
    a = knn_adjacency(table(vecs), k)
    dense = a.to_dense()
    assert np.array_equal(dense, dense.T)
    assert not np.diag(dense).any()
    assert set(np.unique(dense)) <= {0.0, 1.0}
    assert (dense.sum(1) >= k).all()
    assert edge_set(a) == brute_knn_edges(vecs, k)
    scaled = knn_adjacency(table(vecs * scale), k)
    assert edge_set(scaled) == edge_set(a)


def test_laplacian_single_edge():
    l = normalized_laplacian(SparseSym.from_dense([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(l.to_dense(), [[1, -1], [-1, 1]], atol=1e-15)


def test_laplacian_empty_graph_is_identity():
    l = normalized_laplacian(SparseSym.from_dense(np.zeros((3, 3))))
    np.testing.assert_array_equal(l.to_dense(), np.eye(3))


def test_laplacian_triangle():
    l = normalized_laplacian(SparseSym.from_dense(np.ones((3, 3)) - np.eye(3)))
    np.testing.assert_allclose(l.to_dense(), np.where(np.eye(3) == 1, 1.0, -0.5), atol=1e-15)


def test_laplacian_isolated_vertex_row_is_unit():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    l = normalized_laplacian(SparseSym.from_dense(a)).to_dense()
    np.testing.assert_array_equal(l[2], [0.0, 0.0, 1.0])


def test_laplacian_matches_networkx(rng):
    g = nx.gnp_random_graph(15, 0.3, seed=4)
    a = nx.to_numpy_array(g, nodelist=range(15))
    l = normalized_laplacian(SparseSym.from_dense(a)).to_dense()
    ref = nx.normalized_laplacian_matrix(g, nodelist=range(15)).toarray()
    np.testing.assert_allclose(l, ref, atol=1e-12)


@given(st.integers(2, 32), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_laplacian_null_vector_and_spectrum(n, k, seed):
    g = random_knn_graph(np.random.default_rng(seed), n, min(k, n - 1), lambda_max=1.0)
    deg = g.adjacency.to_dense().sum(1)
    assert np.abs(spmv(g.laplacian, np.sqrt(deg))).max() < 1e-10
    w, _ = dense_eigh(g.laplacian.to_dense())
    assert w.min() >= -1e-10 and w.max() <= 2 + 1e-10


@pytest.mark.parametrize("l, lam, expected", [
    ([[1.0, -1.0], [-1.0, 1.0]], 2.0, [[0.0, -1.0], [-1.0, 0.0]]),
    (np.eye(2), 2.0, np.zeros((2, 2))),
    (np.eye(2), 1.0, np.eye(2)),
])
def test_scale_laplacian_examples(l, lam, expected):
    np.testing.assert_array_equal(scale_laplacian(SparseSym.from_dense(l), lam).to_dense(), expected)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_scale_laplacian_rejects_nonpositive(lam):
    with pytest.raises(ValueError):
        scale_laplacian(SparseSym.identity(2), lam)


@given(st.integers(2, 24), st.integers(0, 2**32 - 1), st.floats(0.5, 2.0))
def test_scale_then_unscale(n, seed, lam):
    g = random_knn_graph(np.random.default_rng(seed), n, min(3, n - 1), lambda_max=lam)
    recovered = (g.scaled_laplacian.to_dense() + np.eye(n)) * lam / 2.0
    assert np.abs(recovered - g.laplacian.to_dense()).max() < 1e-12


def test_vectorize_counts():
    s = vectorize_text(["a", "a", "b"], Vocabulary(("a", "b", "c")))
    np.testing.assert_array_equal(s.features, [2, 1, 0])


def test_vectorize_normalized():
    s = vectorize_text(["a", "a", "b", "zz"], Vocabulary(("a", "b", "c")), normalize=True)
    np.testing.assert_allclose(s.features, [0.5, 0.25, 0.0])


@pytest.mark.parametrize("doc", [["x", "y"], []])
def test_vectorize_unusable(doc):
    with pytest.raises(ValueError):
        vectorize_text(doc, Vocabulary(("a", "b")))


def test_text_sample_invariants():
    with pytest.raises(ValueError):
        TextSample(np.array([1.0, -1.0]), "c", "d")
    with pytest.raises(ValueError):
        TextSample(np.zeros(2), "c", "d")


def test_build_text_graph_drops_missing_words(caplog):
    vocab = Vocabulary(("a", "b", "c", "d"))
    emb = EmbeddingTable(("a", "c", "d"), np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]))
    g = build_text_graph(vocab, emb, k=1)
    assert g.vocab.words == ("a", "c", "d")
    assert "dropped 1" in caplog.text


def test_build_text_graph_clamps_k(rng):
    words = tuple("abcd")
    g = build_text_graph(Vocabulary(words), EmbeddingTable(words, rng.normal(size=(4, 3))), k=8)
    assert g.k == 3 and len(g.edges()) == 6


def test_embedding_roundtrip(tmp_path, rng):
    emb = EmbeddingTable(("alpha", "beta", "gamma"), rng.normal(size=(3, 4)))
    p = tmp_path / "emb.txt"
    save_embeddings(emb, p)
    first = p.read_bytes()
    back = load_embeddings(p)
    assert back.words == emb.words
    np.testing.assert_allclose(back.vectors, emb.vectors, rtol=1e-8)
    save_embeddings(back, p)
    assert p.read_bytes() == first


def test_embedding_file_format(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("2 2\nfoo 1 0\nbar 0.5 0.25\n")
    emb = load_embeddings(p)
    assert emb.words == ("foo", "bar")
    np.testing.assert_array_equal(emb.vectors, [[1, 0], [0.5, 0.25]])
    assert load_embeddings(p, wanted={"bar"}).words == ("bar",)


def test_embedding_bad_arity(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("1 3\nfoo 1 0\n")
    with pytest.raises(ValueError, match=":2:"):
        load_embeddings(p)


def test_vocabulary_roundtrip(tmp_path):
    v = build_vocabulary([["a", "b", "a"], ["b", "c"]], max_words=10)
    p = tmp_path / "v.tsv"
    save_vocabulary(v, p)
    assert p.read_text() == "a\t2\nb\t2\nc\t1\n"
    back = load_vocabulary(p)
    assert back.words == v.words and back.counts == v.counts


def test_graph_roundtrip(tmp_path, rng):
    g = random_knn_graph(rng, 10, 2)
    p = tmp_path / "g.txt"
    save_graph(g, p)
    lines = p.read_text().splitlines()
    assert lines[0].split()[:2] == ["10", "2"]
    pairs = [tuple(map(int, ln.split())) for ln in lines[1:]]
    assert pairs == sorted(pairs) and all(i < j for i, j in pairs)
    back = load_graph(p, g.vocab)
    assert back.lambda_max == g.lambda_max
    np.testing.assert_array_equal(back.scaled_laplacian.to_dense(), g.scaled_laplacian.to_dense())
    save_graph(back, tmp_path / "g2.txt")
    assert (tmp_path / "g2.txt").read_bytes() == p.read_bytes()
