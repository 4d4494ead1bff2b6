import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ginret.loss import LossConfig, NonFiniteScores, PairBatch, l2_penalty, loss_gradient, pairwise_loss

CFG = LossConfig(m=0.6, lam=0.35, l2=0.005)
scores = st.lists(st.floats(-10, 10), min_size=2, max_size=12)


def test_separated_constant_scores():
    lb = pairwise_loss([1.0, 1.0], [0.0, 0.0], CFG)
    assert (lb.var_plus, lb.var_minus, lb.hinge, lb.total) == (0.0, 0.0, 0.0, 0.0)


def test_hinge_only():
    lb = pairwise_loss([0.5, 0.5], [0.3, 0.3], CFG)
    assert lb.hinge == pytest.approx(0.4, abs=1e-12)
    assert lb.total == pytest.approx(0.14, abs=1e-12)


def test_population_variance():
    lb = pairwise_loss([1.0, 0.0], [0.0, 0.0], LossConfig(m=0.0, lam=1.0))
    assert (lb.u_plus, lb.var_plus, lb.u_minus, lb.var_minus, lb.hinge, lb.total) == (0.5, 0.25, 0, 0, 0, 0.25)


def test_l2_term():
    w = [np.array([[1.0, 2.0]]), np.array([3.0])]
    assert l2_penalty(w, CFG) == pytest.approx(0.005 * 14)
    base = pairwise_loss([0.5, 0.5], [0.3, 0.3], CFG)
    assert pairwise_loss([0.5, 0.5], [0.3, 0.3], CFG, w).total == pytest.approx(base.total + 0.07)


@pytest.mark.parametrize("pos, neg", [([1.0], [0.0, 0.0]), ([1.0, 2.0], [0.0])])
def test_too_few_scores(pos, neg):
    with pytest.raises(ValueError):
        pairwise_loss(pos, neg, CFG)


def test_non_finite_scores():
    with pytest.raises(NonFiniteScores):
        pairwise_loss([1.0, np.nan], [0.0, 0.0], CFG)


@pytest.mark.parametrize("field", ["m", "lam", "l2"])
def test_config_rejects_negative(field):
    with pytest.raises(ValueError):
        LossConfig(**{field: -0.1})


def test_gradient_zero_when_satisfied():
    d_pos, d_neg = loss_gradient([2.0, 2.0], [0.0, 0.0], CFG)
    assert not d_pos.any() and not d_neg.any()


def test_gradient_zero_at_kink():
    d_pos, d_neg = loss_gradient([0.75, 0.75], [0.25, 0.25], LossConfig(m=0.5, lam=1.0))
    assert not d_pos.any() and not d_neg.any()


def numeric(pos, neg, cfg, h=1e-6):
    def f(p, n):
        return pairwise_loss(p, n, cfg).total
    gp, gn = np.zeros_like(pos), np.zeros_like(neg)
    for arr, g, is_pos in ((pos, gp, True), (neg, gn, False)):
        for i in range(arr.size):
            up, down = arr.copy(), arr.copy()
            up[i] += h
            down[i] -= h
            gp_args = (up, neg) if is_pos else (pos, up)
            gm_args = (down, neg) if is_pos else (pos, down)
            g[i] = (f(*gp_args) - f(*gm_args)) / (2 * h)
    return gp, gn


@given(st.integers(2, 10), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(q1, q2, seed):
    rng = np.random.default_rng(seed)
    pos, neg = rng.normal(size=q1), rng.normal(size=q2)
    gap = CFG.m - (pos.mean() - neg.mean())
    if abs(gap) < 1e-3:
        return
    d_pos, d_neg = loss_gradient(pos, neg, CFG)
    n_pos, n_neg = numeric(pos, neg, CFG)
    a, b = np.r_[d_pos, d_neg], np.r_[n_pos, n_neg]
    assert np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12) < 1e-6


def test_doubling_lambda_doubles_hinge_part(rng):
    pos, neg = rng.normal(size=5) * 0.01, rng.normal(size=4) * 0.01
    base = loss_gradient(pos, neg, LossConfig(m=0.6, lam=0.0))
    one = loss_gradient(pos, neg, LossConfig(m=0.6, lam=0.35))
    two = loss_gradient(pos, neg, LossConfig(m=0.6, lam=0.7))
    for i in range(2):
        np.testing.assert_allclose(two[i] - base[i], 2 * (one[i] - base[i]), atol=1e-15)


@given(scores, scores, st.floats(-100, 100))
def test_translation_invariance(pos, neg, c):
    a = pairwise_loss(pos, neg, CFG).total
    b = pairwise_loss(np.add(pos, c), np.add(neg, c), CFG).total
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@given(scores, scores, st.randoms(use_true_random=False))
def test_permutation_invariance(pos, neg, rnd):
    a = pairwise_loss(pos, neg, CFG).total
    p2, n2 = list(pos), list(neg)
    rnd.shuffle(p2)
    rnd.shuffle(n2)
    assert pairwise_loss(p2, n2, CFG).total == pytest.approx(a, rel=1e-12, abs=1e-12)


@given(scores, scores)
def test_duplication_invariance(pos, neg):
    a = pairwise_loss(pos, neg, CFG).total
    assert pairwise_loss(pos + pos, neg, CFG).total == pytest.approx(a, rel=1e-9, abs=1e-12)
    assert pairwise_loss(pos, neg + neg, CFG).total == pytest.approx(a, rel=1e-9, abs=1e-12)


@given(scores, scores)
def test_zero_iff_constant_and_separated(pos, neg):
    lb = pairwise_loss(pos, neg, CFG)
    constant = len(set(pos)) == 1 and len(set(neg)) == 1
    separated = np.mean(pos) - np.mean(neg) >= CFG.m
    assert (lb.total == 0) == (constant and separated)
    assert lb.var_plus >= 0 and lb.var_minus >= 0 and lb.hinge >= 0


def test_pair_batch_counts():
    b = PairBatch.from_pairs([(0, 0, True), (1, 1, True), (2, 0, False), (3, 1, False), (4, 2, False)])
    assert (b.q1, b.q2, len(b)) == (2, 3, 5)


def test_pair_batch_needs_two_each():
    with pytest.raises(ValueError):
        PairBatch.from_pairs([(0, 0, True), (1, 1, False), (2, 2, False)])


@pytest.mark.parametrize("x, n", [(0.1, 3), (7.3, 5), (-2.9, 11), (1 / 3, 7)])
def test_constant_side_has_exactly_zero_variance(x, n):
    lb = pairwise_loss([x] * n, [x - 1.0] * n, CFG)
    assert lb.var_plus == 0.0 and lb.var_minus == 0.0 and lb.total == 0.0
