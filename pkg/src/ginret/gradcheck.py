"""Central finite-difference verification of the hand-written gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss import LossConfig, PairBatch
from .model import GinModel, ModelConfig, backward, batch_loss
from .text_graph import EmbeddingTable, TextGraph, Vocabulary, graph_from_adjacency, knn_adjacency


@dataclass
class TinyProblem:
    model: GinModel
    graph: TextGraph
    batch: PairBatch
    text_feats: np.ndarray
    image_feats: np.ndarray
    loss_cfg: LossConfig


def tiny_problem(seed=0, n_vertices=12, channels=(4, 4), common_dim=4, batch_size=8, image_dim=6,
                 order=3, k=3, score_mode="hadamard", image_hidden=(), loss_cfg=None) -> TinyProblem:
    rng = np.random.default_rng(seed)
    words = tuple(f"v{i}" for i in range(n_vertices))
    emb = EmbeddingTable(words, rng.normal(size=(n_vertices, 5)))
    graph = graph_from_adjacency(Vocabulary(words), knn_adjacency(emb, k), k)
    cfg = ModelConfig(n_vertices=n_vertices, image_dim=image_dim, channels=channels, order=order,
                      common_dim=common_dim, dropout=0.0, image_hidden=image_hidden,
                      score_mode=score_mode, seed=seed)
    model = GinModel.init(cfg)
    # non-zero biases so their gradients are exercised away from zero
    for name, p in model.parameters().items():
        if name.endswith(".bias"):
            p[...] = rng.uniform(-0.1, 0.1, size=p.shape)
    text_feats = rng.poisson(1.5, size=(batch_size, n_vertices)).astype(float)
    text_feats[:, 0] += 1.0
    image_feats = rng.normal(size=(batch_size, image_dim))
    half = batch_size // 2
    match = np.r_[np.ones(half, bool), np.zeros(batch_size - half, bool)]
    batch = PairBatch(np.arange(batch_size), rng.permutation(batch_size), match)
    return TinyProblem(model, graph, batch, text_feats, image_feats, loss_cfg or LossConfig())


# Gradient norms below this count as zero; central differences at step 1e-5
# carry round-off around 1e-11. The score bias gradient is identically zero
# because the loss ignores a common shift of all scores.
ZERO_FLOOR = 1e-6


def relative_error(a, b, floor=ZERO_FLOOR) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def numeric_gradients(p: TinyProblem, step=1e-5) -> dict[str, np.ndarray]:
    params = p.model.parameters()
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = batch_loss(p.model, p.graph, p.batch, p.loss_cfg, p.text_feats, p.image_feats)
            flat[i] = orig - step
            down = batch_loss(p.model, p.graph, p.batch, p.loss_cfg, p.text_feats, p.image_feats)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def check_gradients(p: TinyProblem, step=1e-5) -> dict[str, float]:
    """Relative error between analytic and numeric gradient, per tensor."""
    _, analytic = backward(p.model, p.batch, p.graph, p.loss_cfg, p.text_feats, p.image_feats)
    numeric = numeric_gradients(p, step)
    return {k: relative_error(analytic[k], numeric[k]) for k in analytic}
