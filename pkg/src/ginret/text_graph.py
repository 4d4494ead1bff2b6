"""Corpus-level word graph: vocabulary, k-NN adjacency over embedding cosine
similarity, normalized and rescaled Laplacians, bag-of-words features."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import SparseSym, power_iteration_lambda_max

logger = logging.getLogger(__name__)

DEFAULT_K = 8
SIM_DECIMALS = 12


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    counts: tuple[int, ...] | None = None
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        words = tuple(self.words)
        object.__setattr__(self, "words", words)
        if len(words) < 2:
            raise ValueError(f"vocabulary needs at least 2 words, got {len(words)}")
        index = {w: i for i, w in enumerate(words)}
        if len(index) != len(words):
            raise ValueError("vocabulary words must be unique")
        if self.counts is not None and len(self.counts) != len(words):
            raise ValueError("counts must align with words")
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.words)

    def subset(self, keep: list[int]) -> "Vocabulary":
        counts = None if self.counts is None else tuple(self.counts[i] for i in keep)
        return Vocabulary(tuple(self.words[i] for i in keep), counts)


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    words: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2 or vec.shape[0] != len(self.words):
            raise ValueError("vectors must be an (N, dim) array aligned with words")
        zero = np.flatnonzero(~vec.any(axis=1))
        if zero.size:
            raise ValueError(f"all-zero embedding for word {self.words[zero[0]]!r}")
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def align(self, vocab: Vocabulary) -> tuple[Vocabulary, "EmbeddingTable"]:
        """Restrict to vocabulary words that have an embedding, in vocab order."""
        lookup = {w: i for i, w in enumerate(self.words)}
        keep = [i for i, w in enumerate(vocab.words) if w in lookup]
        dropped = len(vocab) - len(keep)
        if dropped:
            logger.warning("dropped %d vocabulary words without an embedding", dropped)
        sub = vocab.subset(keep)
        rows = [lookup[w] for w in sub.words]
        return sub, EmbeddingTable(sub.words, self.vectors[rows])


@dataclass(frozen=True, eq=False)
class TextGraph:
    vocab: Vocabulary
    adjacency: SparseSym
    laplacian: SparseSym
    scaled_laplacian: SparseSym
    lambda_max: float
    k: int

    @property
    def n(self) -> int:
        return self.adjacency.n

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with i < j, ascending."""
        rows = self.adjacency.row_ids()
        cols = self.adjacency.col_indices
        upper = rows < cols
        return np.stack([rows[upper], cols[upper]], axis=1)


@dataclass(frozen=True, eq=False)
class TextSample:
    features: np.ndarray
    label: str
    doc_id: str = ""

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1:
            raise ValueError("features must be a vector")
        if (f < 0).any():
            raise ValueError(f"negative feature in document {self.doc_id!r}")
        if not f.any():
            raise ValueError(f"document {self.doc_id!r} has no in-vocabulary tokens")
        object.__setattr__(self, "features", f)


def build_vocabulary(corpus, max_words: int, min_doc_freq: int = 1) -> Vocabulary:
    """Most frequent words of a tokenized corpus.

    Ranking is by total token count (descending), ties broken
    lexicographically; words occurring in fewer than ``min_doc_freq``
    documents are discarded first.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    freq = Counter()
    doc_freq = Counter()
    for doc in corpus:
        freq.update(doc)
        doc_freq.update(set(doc))
    ranked = sorted(
        (w for w in freq if doc_freq[w] >= min_doc_freq),
        key=lambda w: (-freq[w], w),
    )[:max_words]
    if not ranked:
        raise ValueError(f"no word occurs in at least {min_doc_freq} documents")
    return Vocabulary(tuple(ranked), tuple(freq[w] for w in ranked))


def knn_lists(emb: EmbeddingTable, k: int, block: int = 1024) -> np.ndarray:
    """(N, k) indices of each word's k most cosine-similar other words.

    Order is descending similarity, ascending index on ties.
    """
    n = len(emb.words)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    unit = emb.vectors / np.linalg.norm(emb.vectors, axis=1, keepdims=True)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        sim = unit[start:stop] @ unit.T
        # snap to a 1e-12 grid so cosines that tie mathematically but differ
        # by round-off (parallel vectors, rescaled inputs) tie exactly
        sim = np.round(sim, SIM_DECIMALS)
        sim[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on negated similarity keeps ascending index among ties
        out[start:stop] = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    return out


def knn_adjacency(emb: EmbeddingTable, k: int) -> SparseSym:
    """0/1 adjacency with an edge wherever either word is in the other's k-NN."""
    nbrs = knn_lists(emb, k)
    n = nbrs.shape[0]
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    pairs = np.unique(np.concatenate([np.stack([rows, cols], 1), np.stack([cols, rows], 1)]), axis=0)
    return SparseSym.from_triplets(n, pairs[:, 0], pairs[:, 1], np.ones(len(pairs)))


def normalized_laplacian(a: SparseSym) -> SparseSym:
    """``I - D^-1/2 A D^-1/2``; isolated vertices get a zero D^-1/2 entry."""
    rows = a.row_ids()
    deg = np.zeros(a.n)
    np.add.at(deg, rows, a.values)
    inv_sqrt = np.zeros(a.n)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    off = -inv_sqrt[rows] * a.values * inv_sqrt[a.col_indices]
    diag = np.arange(a.n)
    return SparseSym.from_triplets(
        a.n,
        np.concatenate([rows, diag]),
        np.concatenate([a.col_indices, diag]),
        np.concatenate([off, np.ones(a.n)]),
    )


def scale_laplacian(l: SparseSym, lambda_max: float) -> SparseSym:
    """``(2 / lambda_max) L - I``."""
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    diag = np.arange(l.n)
    return SparseSym.from_triplets(
        l.n,
        np.concatenate([l.row_ids(), diag]),
        np.concatenate([l.col_indices, diag]),
        np.concatenate([(2.0 / lambda_max) * l.values, -np.ones(l.n)]),
    )


def graph_from_adjacency(vocab: Vocabulary, adjacency: SparseSym, k: int, lambda_max: float | None = None) -> TextGraph:
    if adjacency.n != len(vocab):
        raise ValueError(f"adjacency has {adjacency.n} vertices but vocabulary has {len(vocab)} words")
    lap = normalized_laplacian(adjacency)
    if lambda_max is None:
        lambda_max = power_iteration_lambda_max(lap)
    return TextGraph(vocab, adjacency, lap, scale_laplacian(lap, lambda_max), float(lambda_max), k)


def build_text_graph(vocab: Vocabulary, emb: EmbeddingTable, k: int = DEFAULT_K) -> TextGraph:
    """Full graph construction; vocabulary words without embeddings are dropped."""
    vocab, emb = emb.align(vocab)
    if len(vocab) < 2:
        raise ValueError("fewer than 2 vocabulary words have embeddings")
    if k > len(vocab) - 1:
        logger.warning("k=%d exceeds N-1=%d; using the complete graph", k, len(vocab) - 1)
        k = len(vocab) - 1
    return graph_from_adjacency(vocab, knn_adjacency(emb, k), k)


def vectorize_text(doc, vocab: Vocabulary, label="", doc_id: str = "", normalize: bool = False) -> TextSample:
    """Bag-of-words counts over the vocabulary (OOV tokens ignored)."""
    feats = np.zeros(len(vocab))
    n_in = 0
    for tok in doc:
        i = vocab.index.get(tok)
        if i is not None:
            feats[i] += 1.0
            n_in += 1
    if n_in == 0:
        raise ValueError(f"document {doc_id!r} has no in-vocabulary tokens")
    if normalize:
        feats /= len(doc)
    return TextSample(feats, label, doc_id)


# --- file formats -----------------------------------------------------------


def load_embeddings(path, wanted=None) -> EmbeddingTable:
    """Read word2vec text format. ``wanted`` optionally restricts the words kept."""
    words, vecs = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected header 'N dim'")
        count, dim = int(header[0]), int(header[1])
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            if wanted is not None and parts[0] not in wanted:
                continue
            words.append(parts[0])
            vecs.append([float(v) for v in parts[1:]])
    if wanted is None and len(words) != count:
        raise ValueError(f"{path}: header declares {count} words, found {len(words)}")
    return EmbeddingTable(tuple(words), np.array(vecs, dtype=np.float64).reshape(len(words), dim))


def save_embeddings(emb: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(emb.words)} {emb.dim}\n")
        for w, v in zip(emb.words, emb.vectors):
            fh.write(w + " " + " ".join(f"{x:.9g}" for x in v) + "\n")


def save_vocabulary(vocab: Vocabulary, path) -> None:
    counts = vocab.counts or (0,) * len(vocab)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for w, c in zip(vocab.words, counts):
            fh.write(f"{w}\t{c}\n")


def load_vocabulary(path) -> Vocabulary:
    words, counts = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'")
        words.append(parts[0])
        counts.append(int(parts[1]))
    return Vocabulary(tuple(words), tuple(counts))


def save_graph(g: TextGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{g.n} {g.k} {g.lambda_max!r}\n")
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")


def load_graph(path, vocab: Vocabulary) -> TextGraph:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}:1: expected header 'n k lambda_max'")
        n, k, lam = int(header[0]), int(header[1]), float(header[2])
        edges = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j'")
            i, j = int(parts[0]), int(parts[1])
            if not 0 <= i < j < n:
                raise ValueError(f"{path}:{lineno}: edge ({i}, {j}) invalid for n={n}")
            edges.append((i, j))
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    adj = SparseSym.from_triplets(n, e[:, 0], e[:, 1], np.ones(len(e)), symmetrize=True)
    return graph_from_adjacency(vocab, adj, k, lam)
