"""Pair sampling, Adam and the epoch loop."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .loss import LossBreakdown, LossConfig, NonFiniteScores, PairBatch
from .model import GinModel, add_l2_grad, backward, backward_pairs, forward_pairs, save_checkpoint, scores_to_loss
from .text_graph import TextGraph

logger = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 200
    q1: int = 100
    q2: int = 100
    epochs: int = 50
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    total_pos: int = 40_000
    total_neg: int = 40_000
    deterministic: bool = True
    workers: int = 1
    checkpoint_path: str | None = None
    checkpoint_every: int = 0  # epochs; 0 = only at the end

    def __post_init__(self):
        if self.q1 + self.q2 != self.batch_size:
            raise ValueError(f"q1 + q2 must equal batch_size ({self.q1} + {self.q2} != {self.batch_size})")
        if self.q1 < 2 or self.q2 < 2:
            raise ValueError("q1 and q2 must both be >= 2")
        if self.epochs < 0 or self.learning_rate < 0:
            raise ValueError("epochs and learning_rate must be non-negative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(eq=False)
class PairPool:
    """Positive and negative (text index, image index) pairs."""

    positive: np.ndarray  # (P, 2)
    negative: np.ndarray  # (Q, 2)
    text_labels: np.ndarray
    image_labels: np.ndarray

    def __post_init__(self):
        self.positive = np.asarray(self.positive, dtype=np.int64).reshape(-1, 2)
        self.negative = np.asarray(self.negative, dtype=np.int64).reshape(-1, 2)
        tl, il = self.text_labels, self.image_labels
        if len(self.positive) and not (tl[self.positive[:, 0]] == il[self.positive[:, 1]]).all():
            raise ValueError("positive pair with mismatched labels")
        if len(self.negative) and (tl[self.negative[:, 0]] == il[self.negative[:, 1]]).any():
            raise ValueError("negative pair with matching labels")


def build_pair_pool(texts, images, cfg: TrainConfig, seed: int | None = None) -> PairPool:
    """Sample matched and mismatched pairs uniformly with replacement.

    A pair is drawn by picking a text uniformly, then an image uniformly among
    those with the same (positive) or a different (negative) label.
    """
    if cfg.total_pos < 2 or cfg.total_neg < 2:
        raise ValueError("pool needs at least 2 positive and 2 negative pairs")
    t_lab = np.array([t.label for t in texts], dtype=object)
    i_lab = np.array([i.label for i in images], dtype=object)
    classes = sorted(set(t_lab) | set(i_lab))
    missing = [c for c in classes if not (t_lab == c).any() or not (i_lab == c).any()]
    if missing:
        raise ValueError(f"classes without both texts and images: {missing}")
    if len(classes) < 2:
        raise ValueError("negative pairs need at least two classes")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    by_class = {c: np.flatnonzero(i_lab == c) for c in classes}
    not_class = {c: np.flatnonzero(i_lab != c) for c in classes}

    def draw(n, pool_for):
        t_idx = rng.integers(0, len(texts), size=n)
        out = np.empty((n, 2), dtype=np.int64)
        out[:, 0] = t_idx
        for r, t in enumerate(t_idx):
            cands = pool_for[t_lab[t]]
            out[r, 1] = cands[rng.integers(0, len(cands))]
        return out

    pos = draw(cfg.total_pos, by_class)
    neg = draw(cfg.total_neg, not_class)
    return PairPool(pos, neg, t_lab, i_lab)


@dataclass(eq=False)
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, lr=0.001, betas=(0.9, 0.999), eps=1e-8) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape mismatch for {k}: {g.shape} vs {params[k].shape}")
        if not np.isfinite(g).all():
            raise TrainingDiverged(f"non-finite gradient for parameter {k}")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    # an all-zero gradient leaves parameters in place (moments still decay)
    move = any(grads[k].any() for k in params)
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if move:
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)


@dataclass
class TrainResult:
    model: GinModel
    epoch_loss: list[float]
    batches: list[tuple[int, int, LossBreakdown]]


def format_progress(epoch: int, batch: int, lb: LossBreakdown) -> str:
    vals = (lb.u_plus, lb.u_minus, lb.var_plus, lb.var_minus, lb.hinge, lb.total)
    return f"{epoch} {batch} " + " ".join(f"{v:.9g}" for v in vals)


class ProgressLog:
    """Sink writing one ``epoch batch u+ u- var+ var- hinge total`` line per batch."""

    def __init__(self, path=None, echo=False):
        self._fh = open(path, "w", encoding="utf-8", newline="\n") if path else None
        self.echo = echo

    def __call__(self, epoch, batch, lb):
        line = format_progress(epoch, batch, lb)
        if self._fh:
            self._fh.write(line + "\n")
        if self.echo:
            print(line, flush=True)

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _chunked_step(model, graph, batch, loss_cfg, text_feats, image_feats, rng, workers):
    """Loss/gradients with forward and backward split across a thread pool.

    Chunk gradients are summed in completion order, so results may differ
    from the deterministic path in the last bits.
    """
    lt = graph.scaled_laplacian
    chunks = np.array_split(np.arange(len(batch)), workers)
    seeds = rng.integers(0, 2**63, size=len(chunks)) if rng is not None else [None] * len(chunks)

    def fwd(j):
        idx = chunks[j]
        r = np.random.default_rng(seeds[j]) if seeds[j] is not None else None
        return forward_pairs(model, lt, text_feats[batch.text_idx[idx]], image_feats[batch.image_idx[idx]], r)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outs = list(pool.map(fwd, range(len(chunks))))
        scores = np.concatenate([o[0] for o in outs])
        breakdown, ds = scores_to_loss(model, batch, scores, loss_cfg)
        futures = [pool.submit(backward_pairs, model, lt, outs[j][1], ds[chunks[j]]) for j in range(len(chunks))]
        grads = None
        for fut in as_completed(futures):
            g = fut.result()
            grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
    return breakdown, add_l2_grad(model, grads, loss_cfg)


def train(model: GinModel, graph: TextGraph, pool: PairPool, text_feats, image_feats,
          cfg: TrainConfig, loss_cfg: LossConfig, progress=None, graph_for_checkpoint=True,
          run_config=None) -> TrainResult:
    """Mini-batch training, mutating and returning ``model``.

    Each epoch shuffles both pair lists, then walks them sequentially taking
    ``q1`` positives and ``q2`` negatives per batch.
    """
    n_batches = min(len(pool.positive) // cfg.q1, len(pool.negative) // cfg.q2)
    if n_batches < 1:
        raise ValueError("pair pool too small for one batch")
    text_feats = np.asarray(text_feats, dtype=model.dtype)
    image_feats = np.asarray(image_feats, dtype=model.dtype)
    # separate streams: pair shuffling must not depend on how dropout draws
    shuffle_seed, dropout_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(shuffle_seed)
    drop_rng = np.random.default_rng(dropout_seed)
    params = model.parameters()
    state = AdamState.for_params(params)
    epoch_loss, records = [], []
    for epoch in range(cfg.epochs):
        pos = pool.positive[rng.permutation(len(pool.positive))]
        neg = pool.negative[rng.permutation(len(pool.negative))]
        totals = []
        for b in range(n_batches):
            pairs = np.concatenate([pos[b * cfg.q1:(b + 1) * cfg.q1], neg[b * cfg.q2:(b + 1) * cfg.q2]])
            match = np.r_[np.ones(cfg.q1, bool), np.zeros(cfg.q2, bool)]
            batch = PairBatch(pairs[:, 0], pairs[:, 1], match)
            try:
                if cfg.deterministic or cfg.workers == 1:
                    lb, grads = backward(model, batch, graph, loss_cfg, text_feats, image_feats, drop_rng)
                else:
                    lb, grads = _chunked_step(model, graph, batch, loss_cfg, text_feats, image_feats, drop_rng,
                                              cfg.workers)
            except NonFiniteScores as exc:
                raise TrainingDiverged(f"epoch {epoch} batch {b}: {exc}") from exc
            if not np.isfinite(lb.total):
                raise TrainingDiverged(
                    f"epoch {epoch} batch {b}: non-finite loss (u+={lb.u_plus}, u-={lb.u_minus}, "
                    f"var+={lb.var_plus}, var-={lb.var_minus})"
                )
            adam_step(params, grads, state, cfg.learning_rate, (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)
            totals.append(lb.total)
            records.append((epoch, b, lb))
            if progress is not None:
                progress(epoch, b, lb)
        epoch_loss.append(float(np.mean(totals)))
        logger.info("epoch %d mean loss %.6g", epoch, epoch_loss[-1])
        if cfg.checkpoint_path and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint_path, model, graph if graph_for_checkpoint else None, run_config)
    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, model, graph if graph_for_checkpoint else None, run_config)
    return TrainResult(model, epoch_loss, records)
