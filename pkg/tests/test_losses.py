import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nstlab import losses as L
from nstlab import ndgrad as nd
from nstlab.datagen import AugmentPolicy
from nstlab.errors import ConfigError, ContractError, DimensionError
from nstlab.ndgrad import Tensor
from nstlab.nnmodel import MlpParams, ModelConfig, init_params, predict_proba

simplex = st.integers(2, 8).flatmap(
    lambda k: st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)).map(lambda v: np.array(v) / np.sum(v))


def zero_model(widths=(2, 4, 3)):
    return MlpParams.from_arrays(
        [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])] + [np.zeros(b) for b in widths[1:]])


# cross entropy -------------------------------------------------------------

def test_ce_perfect():
    assert L.cross_entropy(Tensor([1.0, 0.0]), np.array([0])).item() == 0.0


def test_ce_uniform():
    assert L.cross_entropy(Tensor(np.full(10, 0.1)), np.array([7])).item() == pytest.approx(math.log(10), abs=1e-12)


def test_ce_hand():
    assert L.cross_entropy(Tensor([0.8, 0.2]), np.array([1])).item() == pytest.approx(-math.log(0.2), abs=1e-12)


def test_ce_soft_targets_and_mismatch():
    p = Tensor([[0.5, 0.5], [0.9, 0.1]])
    t = np.array([[1.0, 0.0], [0.5, 0.5]])
    expected = (-math.log(0.5) + -(0.5 * math.log(0.9) + 0.5 * math.log(0.1))) / 2
    assert L.cross_entropy(p, t).item() == pytest.approx(expected, abs=1e-12)
    with pytest.raises(DimensionError):
        L.cross_entropy(p, np.ones((2, 3)) / 3)


def test_ce_softmax_path_matches_clamped_path():
    z = np.random.default_rng(0).normal(size=(5, 4))
    y = np.array([0, 1, 2, 3, 0])
    fused = L.cross_entropy(nd.softmax(Tensor(z)), y).item()
    plain = L.cross_entropy(Tensor(nd.softmax(Tensor(z)).data), y).item()
    assert fused == pytest.approx(plain, abs=1e-12)


# pair consistency ----------------------------------------------------------

def test_pair_zero():
    p = Tensor([0.3, 0.7])
    assert L.pair_consistency_loss(p, p).item() == 0.0


def test_pair_one_hot():
    assert L.pair_consistency_loss(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 2.0


def test_pair_hand():
    assert L.pair_consistency_loss(Tensor([0.6, 0.4]), Tensor([0.5, 0.5])).item() == pytest.approx(0.02, abs=1e-12)


def test_pair_mismatch():
    with pytest.raises(DimensionError):
        L.pair_consistency_loss(Tensor([0.5, 0.5]), Tensor([1.0, 0.0, 0.0]))


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_pair_properties(data):
    k = data.draw(st.integers(2, 6))
    vec = st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k).filter(lambda v: sum(v) > 0.1)
    p = np.array(data.draw(vec)); p /= p.sum()
    q = np.array(data.draw(vec)); q /= q.sum()
    d = L.pair_consistency_loss(Tensor(p), Tensor(q)).item()
    assert d == pytest.approx(L.pair_consistency_loss(Tensor(q), Tensor(p)).item(), abs=1e-15)
    assert 0.0 <= d <= 2.0 + 1e-12
    assert (d <= 1e-24) == np.allclose(p, q, atol=1e-12, rtol=0)


# nullspace tuning loss -----------------------------------------------------

@pytest.fixture
def mlp():
    return init_params(ModelConfig((2, 8, 3), seed=0))


def test_nst_lambda_zero(mlp):
    rng = np.random.default_rng(0)
    xl, y = rng.normal(size=(4, 2)), np.array([0, 1, 2, 0])
    xj, xk = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    assert L.nst_loss(mlp, xl, y, xj, xk, 0.0).item() == L.cross_entropy(predict_proba(mlp, xl), y).item()


def test_nst_identical_pair_term_zero(mlp):
    rng = np.random.default_rng(1)
    xl, y = rng.normal(size=(4, 2)), np.array([0, 1, 2, 0])
    xj = rng.normal(size=(3, 2))
    assert L.nst_loss(mlp, xl, y, xj, xj.copy(), 5.0).item() == L.cross_entropy(predict_proba(mlp, xl), y).item()


def test_nst_matches_separate_terms(mlp):
    rng = np.random.default_rng(2)
    xl, y = rng.normal(size=(6, 2)), rng.integers(0, 3, 6)
    xj, xk = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    # oracle from raw arrays
    pl, pj, pk = (predict_proba(mlp, x).data for x in (xl, xj, xk))
    ce = -np.mean(np.log(pl[np.arange(6), y]))
    pair = np.mean(np.sum((pj - pk) ** 2, axis=1))
    assert L.nst_loss(mlp, xl, y, xj, xk, 0.7).item() == pytest.approx(ce + 0.7 * pair, abs=1e-12)


def test_nst_empty_labeled(mlp):
    with pytest.raises(ContractError):
        L.nst_loss(mlp, np.zeros((0, 2)), np.array([], dtype=int), np.ones((1, 2)), np.ones((1, 2)), 1.0)


# sharpening and label guessing ----------------------------------------------

def test_sharpen_uniform_fixed_point():
    for T in (0.25, 0.5, 2.0):
        np.testing.assert_allclose(L.sharpen(Tensor(np.full(4, 0.25)), T).data, 0.25, atol=1e-15)


def test_sharpen_T1_identity():
    p = np.array([0.1, 0.6, 0.3])
    np.testing.assert_allclose(L.sharpen(Tensor(p), 1.0).data, p, atol=1e-15)


def test_sharpen_hand():
    np.testing.assert_allclose(L.sharpen(Tensor([0.8, 0.2]), 0.5).data, [16 / 17, 1 / 17], atol=1e-12)


def test_sharpen_bad_T():
    with pytest.raises(ConfigError):
        L.sharpen(Tensor([0.5, 0.5]), 0.0)


def _entropy(p):
    p = np.clip(p, 1e-300, None)
    return -np.sum(p * np.log(p))


@settings(max_examples=1000, deadline=None)
@given(simplex, st.sampled_from([0.25, 0.5, 0.9, 1.0]))
def test_sharpen_properties(p, T):
    s = L.sharpen(Tensor(p), T).data
    assert abs(s.sum() - 1) < 1e-12 and np.all(s >= 0)
    assert np.argmax(s) == np.argmax(p)
    assert _entropy(s) <= _entropy(p) + 1e-12


def test_sharpen_gradient_finite_diff():
    p = Tensor([0.2, 0.5, 0.3], requires_grad=True)
    w = np.array([1.0, -2.0, 0.5])

    def f(ps):
        return (L.sharpen(ps[0], 0.5) * w).sum()

    g = nd.backward(f([p]), [p])[p]
    np.testing.assert_allclose(g, nd.finite_diff_grad(f, [p])[p], rtol=1e-6, atol=1e-9)


def test_guess_degenerate_pipeline(mlp):
    x = np.random.default_rng(0).normal(size=(5, 2))
    q = L.guess_label(mlp, x, 1, AugmentPolicy(), 1.0, np.random.default_rng(0)).data
    np.testing.assert_allclose(q, predict_proba(mlp, x).data, atol=1e-15)
    for K in (2, 4):
        qK = L.guess_label(mlp, x, K, AugmentPolicy(), 1.0, np.random.default_rng(0)).data
        np.testing.assert_allclose(qK, predict_proba(mlp, x).data, atol=1e-12)


def test_guess_zero_model_uniform():
    x = np.random.default_rng(0).normal(size=(3, 2))
    q = L.guess_label(zero_model(), x, 3, AugmentPolicy.jitter(1.0), 0.5, np.random.default_rng(0)).data
    np.testing.assert_allclose(q, 1 / 3, atol=1e-15)


def test_guess_on_simplex(mlp):
    x = np.random.default_rng(3).normal(size=(20, 2))
    q = L.guess_label(mlp, x, 2, AugmentPolicy.jitter(0.3), 0.5, np.random.default_rng(0)).data
    np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)


# mixup --------------------------------------------------------------------

def test_mixup_endpoint():
    x1, x2 = np.array([[1.0, 2.0]]), np.array([[5.0, -1.0]])
    p1, p2 = np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])
    xm, pm = L.mixup(x1, p1, x2, p2, 0.75, lam=1.0)
    np.testing.assert_array_equal(xm, x1)
    np.testing.assert_array_equal(pm, p1)


def test_mixup_folds_lambda():
    x1, x2 = np.array([1.0, 0.0]), np.array([0.0, 10.0])
    p1, p2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    xm, pm = L.mixup(x1, p1, x2, p2, 0.75, lam=0.3)
    np.testing.assert_allclose(xm, 0.7 * x1 + 0.3 * x2, atol=1e-15)
    np.testing.assert_allclose(pm, [0.7, 0.3], atol=1e-15)


def test_mixup_mismatch():
    with pytest.raises(DimensionError):
        L.mixup(np.ones(2), np.ones(2), np.ones(3), np.ones(2), 0.5, np.random.default_rng(0))


@pytest.mark.parametrize("alpha", [0.25, 0.75, 2.0])
def test_mixup_weights_at_least_half(alpha):
    rng = np.random.default_rng(0)
    x1, x2 = np.array([1.0]), np.array([0.0])
    for _ in range(1000):
        xm, _ = L.mixup(x1, np.array([1.0, 0.0]), x2, np.array([0.0, 1.0]), alpha, rng)
        assert 0.5 <= xm[0] <= 1.0


# MixMatch ------------------------------------------------------------------

def _mm_inputs(seed=0, n_l=6, n_pairs=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n_l, 2)), rng.integers(0, 3, n_l), rng.normal(size=(2 * n_pairs, 2))


@pytest.mark.parametrize("K", [1, 2, 3])
def test_mixmatch_sizes(mlp, K):
    xl, yl, xu = _mm_inputs()
    mixed, rec = L.mixmatch_batch(mlp, xl, yl, xu, L.MixConfig(K=K), AugmentPolicy.jitter(0.1),
                                  np.random.default_rng(0))
    # pool = |labeled| + K |unlabeled|, split back into the two parts
    assert len(mixed.x_l) == len(xl) and len(mixed.y_l) == len(xl)
    assert len(mixed.x_u) == K * len(xu) and len(mixed.q_u) == K * len(xu)
    assert len(rec[0]) == len(rec[1]) == len(xu) // 2
    np.testing.assert_allclose(mixed.y_l.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(mixed.q_u.sum(axis=1), 1.0, atol=1e-12)


def test_mixmatch_records_pre_mixup_guesses(mlp):
    xl, yl, xu = _mm_inputs(1)
    policy, cfg = AugmentPolicy.jitter(0.2), L.MixConfig(K=2)
    _, rec = L.mixmatch_batch(mlp, xl, yl, xu, cfg, policy, np.random.default_rng(5), record="post-sharpen")
    # replay the rng: one labeled augmentation, then K unlabeled augmentations
    rng = np.random.default_rng(5)
    from nstlab.datagen import augment
    augment(xl, policy, rng)
    augmented = [augment(xu, policy, rng) for _ in range(cfg.K)]
    q = L.guess_label(mlp, xu, cfg.K, policy, cfg.T, None, augmented=augmented).data
    assert rec[0].data.tobytes() == q[0::2].tobytes()
    assert rec[1].data.tobytes() == q[1::2].tobytes()
    _, rec_pre = L.mixmatch_batch(mlp, xl, yl, xu, cfg, policy, np.random.default_rng(5))
    mean = L.mean_prediction(mlp, augmented).data
    assert rec_pre[0].data.tobytes() == mean[0::2].tobytes()
    assert rec_pre[1].data.tobytes() == mean[1::2].tobytes()


def test_mixmatch_deterministic(mlp):
    xl, yl, xu = _mm_inputs(2)
    a, _ = L.mixmatch_batch(mlp, xl, yl, xu, L.MixConfig(), AugmentPolicy.jitter(0.1), np.random.default_rng(9))
    b, _ = L.mixmatch_batch(mlp, xl, yl, xu, L.MixConfig(), AugmentPolicy.jitter(0.1), np.random.default_rng(9))
    for f in ("x_l", "y_l", "x_u", "q_u"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


def test_mixmatch_odd_pairing(mlp):
    xl, yl, _ = _mm_inputs()
    with pytest.raises(ContractError):
        L.mixmatch_batch(mlp, xl, yl, np.ones((3, 2)), L.MixConfig(), AugmentPolicy(), np.random.default_rng(0))


def test_mixmatch_recorded_guesses_carry_gradient(mlp):
    xl, yl, xu = _mm_inputs(3)
    _, (qj, qk) = L.mixmatch_batch(mlp, xl, yl, xu, L.MixConfig(), AugmentPolicy.jitter(0.1),
                                   np.random.default_rng(0))
    g = nd.backward(L.pair_consistency_loss(qj, qk), mlp.tensors())
    assert any(np.any(g[p] != 0) for p in mlp.tensors())


def test_mixmatch_losses_zero_residual():
    model = zero_model()
    x = np.random.default_rng(0).normal(size=(4, 2))
    mixed = L.MixedBatch(x, np.full((4, 3), 1 / 3), x, np.full((4, 3), 1 / 3))
    _, L_U = L.mixmatch_losses(model, mixed)
    assert L_U.item() == 0.0


def test_mixmatch_losses_one_row(mlp):
    x = np.array([[0.3, -0.2]])
    q = np.array([[0.2, 0.5, 0.3]])
    _, L_U = L.mixmatch_losses(mlp, L.MixedBatch(x, q, x, q))
    expected = L.pair_consistency_loss(predict_proba(mlp, x), Tensor(q)).item() / 3
    assert L_U.item() == pytest.approx(expected, abs=1e-15)


def test_mixmatch_losses_recompute(mlp):
    rng = np.random.default_rng(4)
    yl = rng.dirichlet(np.ones(3), 5)
    qu = rng.dirichlet(np.ones(3), 7)
    mixed = L.MixedBatch(rng.normal(size=(5, 2)), yl, rng.normal(size=(7, 2)), qu)
    L_X, L_U = L.mixmatch_losses(mlp, mixed)
    pl, pu = predict_proba(mlp, mixed.x_l).data, predict_proba(mlp, mixed.x_u).data
    assert L_X.item() == pytest.approx(-np.mean(np.sum(yl * np.log(pl), axis=1)), abs=1e-12)
    assert L_U.item() == pytest.approx(np.mean(np.sum((pu - qu) ** 2, axis=1)) / 3, abs=1e-12)


# combined loss -------------------------------------------------------------

def test_combined_weight_zero():
    assert L.combined_loss(1.25, 0.5, 0.2, 0.0, 0.0) == 1.25


def test_combined_hand():
    assert L.combined_loss(1.0, 0.5, 0.2, 75.0, 1.0) == pytest.approx(38.7, abs=1e-12)


def test_combined_default_lambda_E():
    assert L.LossWeights().lambda_E == 1.0


def test_combined_negative_weight():
    with pytest.raises(ConfigError):
        L.combined_loss(1.0, 1.0, 1.0, -1.0, 0.0)


# baselines -----------------------------------------------------------------

def test_pi_model_identity_zero(mlp):
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert L.pi_model_loss(mlp, x, AugmentPolicy(), np.random.default_rng(0)).item() == 0.0


def test_pi_model_recompute(mlp):
    x = np.random.default_rng(0).normal(size=(5, 2))
    policy = AugmentPolicy.jitter(0.5)
    got = L.pi_model_loss(mlp, x, policy, np.random.default_rng(3)).item()
    rng = np.random.default_rng(3)
    from nstlab.datagen import augment
    a = predict_proba(mlp, augment(x, policy, rng))
    b = predict_proba(mlp, augment(x, policy, rng))
    assert got == L.pair_consistency_loss(a, b).item()
    assert got >= 0


def test_pseudo_label_gate_closed():
    assert L.pseudo_label_loss(Tensor([0.6, 0.4]), 0.95).item() == 0.0


def test_pseudo_label_hand():
    assert L.pseudo_label_loss(Tensor([0.96, 0.04]), 0.95).item() == pytest.approx(-math.log(0.96), abs=1e-12)


def test_pseudo_label_threshold_one():
    assert L.pseudo_label_loss(Tensor([0.999999, 0.000001]), 1.0).item() == 0.0


def test_pseudo_label_strict_gate():
    assert L.pseudo_label_loss(Tensor([0.95, 0.05]), 0.95).item() == 0.0


def test_mean_teacher_values():
    p = Tensor([0.7, 0.3])
    assert L.mean_teacher_loss(p, Tensor([0.7, 0.3])).item() == 0.0
    assert L.mean_teacher_loss(p, Tensor([0.6, 0.4])).item() == pytest.approx(0.02, abs=1e-12)


def test_mean_teacher_no_teacher_gradient():
    s = Tensor([0.7, 0.3], requires_grad=True)
    t = Tensor([0.6, 0.4], requires_grad=True)
    with pytest.raises(Exception):
        nd.backward(L.mean_teacher_loss(s, t), [t])
    np.testing.assert_allclose(nd.backward(L.mean_teacher_loss(s, t), [s])[s], [0.2, -0.2], atol=1e-12)


def test_vat_eps_zero(mlp):
    x = np.random.default_rng(0).normal(size=(4, 2))
    assert L.vat_loss(mlp, x, 1e-6, 0.0, 1, np.random.default_rng(0)).item() == pytest.approx(0.0, abs=1e-12)


def test_vat_direction_unit(mlp):
    x = np.random.default_rng(0).normal(size=(6, 2))
    d = L.vat_direction(mlp, x, 1e-6, 2, np.random.default_rng(1))
    np.testing.assert_allclose(np.linalg.norm(2.5 * d, axis=1), 2.5, atol=1e-12)


def test_vat_zero_gradient_falls_back():
    d = L.vat_direction(zero_model(), np.ones((2, 2)), 1e-6, 2, np.random.default_rng(0))
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(d))


def test_vat_nonnegative(mlp):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=(3, 2)) * 3
        assert L.vat_loss(mlp, x, 1e-6, rng.uniform(0, 2), 1, rng).item() >= -1e-15


def _kl(p, q):
    return float(np.sum(p * (np.log(p) - np.log(q))))


@pytest.mark.parametrize("k,n_power", [(2, 1), (3, 10)])
@pytest.mark.parametrize("seed", range(5))
def test_vat_direction_beats_random_search(seed, k, n_power):
    # small radius: the second-order regime the power iteration targets
    rng = np.random.default_rng(seed)
    model = MlpParams.from_arrays([rng.normal(size=(2, k)), rng.normal(size=k)])
    x = rng.normal(size=(1, 2))
    eps = 0.01
    p = predict_proba(model, x).data[0]
    d = L.vat_direction(model, x, 1e-6, n_power, rng)[0]
    kl_power = _kl(p, predict_proba(model, x + eps * d).data[0])
    # oracle: best of 10^4 random unit directions
    dirs = rng.normal(size=(10_000, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    q = predict_proba(model, x + eps * dirs).data
    best = np.max(np.sum(p * (np.log(p) - np.log(q)), axis=1))
    assert kl_power >= 0.95 * best
