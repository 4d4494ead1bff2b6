"""Mean/variance pairwise similarity loss.

    total = var(pos) + var(neg) + lambda * max(0, margin - (mean(pos) - mean(neg)))

with population (divide-by-Q) variances, plus an optional L2 penalty
``l2 * sum(w**2)`` over weight tensors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteScores(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    m: float = 0.6
    lam: float = 0.35
    l2: float = 0.005

    def __post_init__(self):
        for name in ("m", "lam", "l2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"LossConfig.{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Index triples into caller-held text and image collections."""

    text_idx: np.ndarray
    image_idx: np.ndarray
    match: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.text_idx, dtype=np.int64)
        i = np.asarray(self.image_idx, dtype=np.int64)
        mt = np.asarray(self.match, dtype=bool)
        if not (t.shape == i.shape == mt.shape) or t.ndim != 1:
            raise ValueError("text_idx, image_idx and match must be equal-length vectors")
        object.__setattr__(self, "text_idx", t)
        object.__setattr__(self, "image_idx", i)
        object.__setattr__(self, "match", mt)
        if self.q1 < 2 or self.q2 < 2:
            raise ValueError(f"batch needs >= 2 matching and >= 2 non-matching pairs (got {self.q1}, {self.q2})")

    @classmethod
    def from_pairs(cls, pairs) -> "PairBatch":
        t, i, m = zip(*pairs)
        return cls(np.array(t), np.array(i), np.array(m))

    @property
    def q1(self) -> int:
        return int(self.match.sum())

    @property
    def q2(self) -> int:
        return int(self.match.size - self.match.sum())

    def __len__(self):
        return int(self.match.size)


@dataclass(frozen=True)
class LossBreakdown:
    u_plus: float
    u_minus: float
    var_plus: float
    var_minus: float
    hinge: float
    total: float


def _check(pos, neg):
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.ndim != 1 or neg.ndim != 1 or pos.size < 2 or neg.size < 2:
        raise ValueError("need at least 2 matching and 2 non-matching scores")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise NonFiniteScores(
            f"non-finite scores (pos: {np.isfinite(pos).sum()}/{pos.size} finite, "
            f"neg: {np.isfinite(neg).sum()}/{neg.size} finite)"
        )
    return pos, neg


def _mean_centered(s):
    # constant sides get an exact mean so their variance is exactly zero
    u = s[0] if (s == s[0]).all() else s.mean()
    return float(u), s - u


def l2_penalty(weights, cfg: LossConfig) -> float:
    return cfg.l2 * sum(float(np.sum(np.square(w, dtype=np.float64))) for w in weights)


def pairwise_loss(pos_scores, neg_scores, cfg: LossConfig, weights=None) -> LossBreakdown:
    pos, neg = _check(pos_scores, neg_scores)
    u_plus, c_plus = _mean_centered(pos)
    u_minus, c_minus = _mean_centered(neg)
    var_plus = np.mean(c_plus**2)
    var_minus = np.mean(c_minus**2)
    hinge = max(0.0, cfg.m - (u_plus - u_minus))
    total = var_plus + var_minus + cfg.lam * hinge
    if weights is not None:
        total += l2_penalty(weights, cfg)
    return LossBreakdown(float(u_plus), float(u_minus), float(var_plus), float(var_minus), float(hinge), float(total))


def loss_gradient(pos_scores, neg_scores, cfg: LossConfig):
    """Gradient of the (unregularised) total with respect to each score.

    The hinge contributes nothing at or beyond the margin, including the
    kink itself.
    """
    pos, neg = _check(pos_scores, neg_scores)
    q1, q2 = pos.size, neg.size
    u_plus, c_plus = _mean_centered(pos)
    u_minus, c_minus = _mean_centered(neg)
    # d/ds_i of mean((s - u)^2) is 2 (s_i - u) / Q; the u-dependence cancels
    d_pos = 2.0 * c_plus / q1
    d_neg = 2.0 * c_minus / q2
    if cfg.m - (u_plus - u_minus) > 0:
        d_pos = d_pos - cfg.lam / q1
        d_neg = d_neg + cfg.lam / q2
    return d_pos, d_neg
