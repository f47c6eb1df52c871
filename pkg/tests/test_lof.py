import math

import numpy as np
import pytest

from cobbkit.lof import (
    LossConfig,
    check_heatmaps,
    finite_diff_check,
    foreground_weights,
    gaussian_heatmaps,
    heatmap_loss,
    landmark_loss,
    total_loss,
)
from cobbkit.selfcheck import loss_check, random_distributions


def naive_heatmap_loss(pred, gt, beta, floor=1e-12):
    total = 0.0
    for c in range(gt.shape[0]):
        for y, p in zip(gt[c].ravel(), pred[c].ravel()):
            if y > 0:
                total += (beta * y + 1) ** y * y * math.log(y / max(p, floor))
    return total / gt.shape[0]


def test_defaults():
    cfg = LossConfig()
    assert (cfg.alpha, cfg.beta) == (5.0, 15.0)
    with pytest.raises(ValueError):
        LossConfig(alpha=-1)


@pytest.mark.parametrize("y, beta, expected", [
    (0.0, 15.0, 1.0),
    (1.0, 15.0, 16.0),
    (0.5, 15.0, 8.5 ** 0.5),
    (0.7, 0.0, 1.0),
])
def test_foreground_weight(y, beta, expected):
    assert foreground_weights(y, beta) == pytest.approx(expected, rel=1e-15)


def test_weight_half_value():
    assert foreground_weights(0.5, 15) == pytest.approx(2.91548, abs=1e-5)


def test_identical_maps_have_zero_loss():
    gt = gaussian_heatmaps([[3.0, 4.0], [1.0, 1.0]], 8, 8)
    loss, grad = heatmap_loss(gt, gt)
    assert loss == 0.0
    w = foreground_weights(gt, 15.0)
    np.testing.assert_allclose(grad, -w / 2, rtol=1e-14)


def test_one_hot_against_uniform():
    gt = np.zeros((1, 4, 4))
    gt[0, 1, 2] = 1.0
    pred = np.full((1, 4, 4), 1 / 16)
    loss, _ = heatmap_loss(pred, gt, LossConfig(beta=0.0))
    assert loss == pytest.approx(math.log(16), rel=1e-14)
    loss15, _ = heatmap_loss(pred, gt)
    assert loss15 == pytest.approx(16 * math.log(16), rel=1e-14)


def test_matches_naive_loop():
    rng = np.random.default_rng(3)
    gt = random_distributions(rng, (3, 5, 5))
    pred = random_distributions(rng, (3, 5, 5))
    loss, _ = heatmap_loss(pred, gt)
    assert loss == pytest.approx(naive_heatmap_loss(pred, gt, 15.0), rel=1e-12)


def test_floor_clamp():
    gt = np.array([[[0.5, 0.5]]])
    pred = np.array([[[1.0, 0.0]]])
    loss, grad = heatmap_loss(pred, gt, LossConfig(beta=0.0))
    assert loss == pytest.approx(0.5 * math.log(0.5) + 0.5 * math.log(0.5 / 1e-12))
    assert grad[0, 0, 1] == 0.0 and np.isfinite(loss)


def test_plain_kl_is_non_negative():
    rng = np.random.default_rng(5)
    cfg = LossConfig(beta=0.0)
    for _ in range(200):
        gt = random_distributions(rng, (2, 4, 4))
        pred = random_distributions(rng, (2, 4, 4))
        assert heatmap_loss(pred, gt, cfg)[0] >= 0


def test_weighted_loss_can_be_negative():
    # the pixel weights amplify the negative term as well; see the ledger
    gt = np.array([[[0.9, 0.1]]])
    pred = np.array([[[0.99, 0.01]]])
    assert heatmap_loss(pred, gt, LossConfig(beta=0.0))[0] > 0
    assert heatmap_loss(pred, gt, LossConfig(beta=15.0))[0] < 0


def test_beta_increases_loss_for_blurred_prediction():
    rng = np.random.default_rng(8)
    for _ in range(20):
        centres = rng.uniform(4, 12, (3, 2))
        gt = gaussian_heatmaps(centres, 16, 16, sigma=1.5)
        pred = gaussian_heatmaps(centres, 16, 16, sigma=3.0)
        losses = [heatmap_loss(pred, gt, LossConfig(beta=b))[0] for b in (0, 5, 15, 30)]
        assert losses == sorted(losses) and losses[0] > 0


def test_landmark_loss():
    loss, g = landmark_loss([1.0, 2.0], [0.0, 0.0])
    assert loss == 1.5
    assert list(g) == [0.5, 0.5]
    rng = np.random.default_rng(1)
    gt = rng.normal(size=136)
    c = 0.37
    pred = gt.copy()
    pred[17] += c
    assert landmark_loss(pred, gt)[0] == pytest.approx(c / 136, rel=1e-12)
    assert landmark_loss(gt, gt) == (0.0, pytest.approx(np.zeros(136)))


@pytest.mark.parametrize("alpha, lh, ll, expected", [
    (0.0, 3.0, 2.0, 2.0),
    (5.0, 0.2, 0.5, 1.5),
    (5.0, 0.0, 0.0, 0.0),
])
def test_total_loss(alpha, lh, ll, expected):
    assert total_loss(lh, ll, LossConfig(alpha=alpha)) == pytest.approx(expected, rel=1e-15)


def test_total_is_affine_in_alpha():
    vals = [total_loss(0.3, 0.7, LossConfig(alpha=a)) for a in (0, 1, 2, 3)]
    assert np.allclose(np.diff(vals), 0.3, rtol=1e-14)


def test_finite_diff_on_square():
    rep = finite_diff_check(lambda x: (float((x ** 2).sum()), 2 * x), [1.0], h=1e-5)
    assert rep.max_rel_err <= 1e-10 and rep.n_coords == 1


def test_finite_diff_catches_wrong_gradient():
    rep = finite_diff_check(lambda x: (float((x ** 2).sum()), 3 * x), [1.0, 2.0])
    assert not rep.passed(1e-3)


def test_heatmap_gradient():
    rng = np.random.default_rng(0)
    gt = random_distributions(rng, (4, 8, 8))
    pred = random_distributions(rng, (4, 8, 8))
    rep = finite_diff_check(lambda p: heatmap_loss(p, gt), pred, h=1e-6)
    assert rep.n_coords == 256 and rep.max_rel_err <= 1e-5


def test_landmark_gradient_excludes_kinks():
    rng = np.random.default_rng(2)
    gt = rng.uniform(0, 10, 136)
    pred = rng.uniform(0, 10, 136)
    pred[:3] = gt[:3]
    rep = finite_diff_check(lambda p: landmark_loss(p, gt), pred, h=1e-3, kinks=gt)
    assert rep.n_excluded >= 3 and rep.max_rel_err <= 1e-6


def test_loss_check_summary():
    r = loss_check(seed=4)
    assert set(r) == {"max_rel_err", "mean_rel_err", "n_coords", "seed"}
    assert r["max_rel_err"] <= 1e-5 and r["n_coords"] > 256


def test_input_errors():
    with pytest.raises(ValueError):
        heatmap_loss(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        heatmap_loss(np.full((1, 2), np.nan), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        landmark_loss([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        check_heatmaps(np.full((1, 2, 2), 0.3))
    with pytest.raises(ValueError):
        finite_diff_check(lambda x: (0.0, x), [1.0], h=0)
    assert check_heatmaps(gaussian_heatmaps([[1, 1]], 4, 4)).shape == (1, 4, 4)
