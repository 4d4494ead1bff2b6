"""End-to-end glue: corpus -> graph -> features -> training -> evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .data_io import Corpus
from .evaluation import EvalReport, ScoreMatrix, evaluate_both, score_all
from .model import GinModel
from .text_graph import EmbeddingTable, TextGraph, TextSample, build_text_graph, build_vocabulary, vectorize_text
from .trainer import TrainResult, build_pair_pool, train

logger = logging.getLogger(__name__)


@dataclass
class TrainedRun:
    model: GinModel
    graph: TextGraph
    result: TrainResult


def vectorize_documents(docs, graph: TextGraph, normalize=False) -> list[TextSample]:
    """Bag-of-words samples; documents with no vocabulary word are skipped and counted."""
    out, skipped = [], 0
    for d in docs:
        try:
            out.append(vectorize_text(d.tokens, graph.vocab, d.label, d.doc_id, normalize))
        except ValueError:
            skipped += 1
    if skipped:
        logger.warning("skipped %d documents without in-vocabulary tokens", skipped)
    return out


def prepare_graph(cfg: RunConfig, docs, emb: EmbeddingTable) -> TextGraph:
    vocab = build_vocabulary([d.tokens for d in docs], cfg.max_words, cfg.min_doc_freq)
    return build_text_graph(vocab, emb, cfg.k)


def train_run(cfg: RunConfig, corpus: Corpus, emb: EmbeddingTable, progress=None,
              checkpoint_path=None) -> TrainedRun:
    docs, images = corpus.split("train")
    graph = prepare_graph(cfg, docs, emb)
    texts = vectorize_documents(docs, graph, cfg.normalize_counts)
    tcfg = cfg.train_config(checkpoint_path)
    pool = build_pair_pool(texts, images, tcfg)
    model = GinModel.init(cfg.model_config(graph.n, images[0].features.size))
    result = train(
        model, graph, pool,
        np.stack([t.features for t in texts]), np.stack([im.features for im in images]),
        tcfg, cfg.loss_config(), progress, run_config=cfg.to_dict(),
    )
    return TrainedRun(model, graph, result)


def score_split(model: GinModel, graph: TextGraph, corpus: Corpus, split: str, normalize=False) -> ScoreMatrix:
    docs, images = corpus.split(split)
    texts = vectorize_documents(docs, graph, normalize)
    return score_all(model, graph, texts, images)


def evaluate_split(model, graph, corpus, split="test", normalize=False) -> tuple[EvalReport, EvalReport]:
    return evaluate_both(score_split(model, graph, corpus, split, normalize))
