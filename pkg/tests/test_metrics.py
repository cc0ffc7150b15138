import numpy as np
import pytest

from densedepth.metrics import EvalResult, aggregate, compute_metrics


def rand_depths(seed=0, n=50):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(2.0, 60.0, size=(1, 1, n))
    pred = gt + rng.normal(0, 1.0, size=gt.shape)
    pred = np.clip(pred, 0.5, None)
    return pred, gt


def test_perfect_prediction_all_zero():
    _, gt = rand_depths()
    r = compute_metrics(gt, gt, np.ones_like(gt))
    assert r.rmse_mm == 0 and r.mae_mm == 0 and r.irmse_per_km == 0
    assert r.imae_per_km == 0 and r.absrel == 0
    assert r.n_valid == gt.size


def test_one_meter_offset():
    _, gt = rand_depths(seed=1)
    r = compute_metrics(gt + 1.0, gt, np.ones_like(gt))
    assert r.rmse_mm == pytest.approx(1000.0)
    assert r.mae_mm == pytest.approx(1000.0)


def test_single_pixel_closed_form():
    gt = np.array([[[1.0]]])
    pred = np.array([[[2.0]]])
    r = compute_metrics(pred, gt, np.ones_like(gt))
    assert r.imae_per_km == pytest.approx(500.0)   # |1/2 - 1/1| = 0.5 per m = 500 per km
    assert r.irmse_per_km == pytest.approx(500.0)
    assert r.absrel == pytest.approx(1.0)
    assert r.rmse_mm == pytest.approx(1000.0)


def test_rmse_dominates_mae():
    for seed in range(5):
        pred, gt = rand_depths(seed=seed)
        r = compute_metrics(pred, gt, np.ones_like(gt))
        assert r.rmse_mm >= r.mae_mm
        assert r.irmse_per_km >= r.imae_per_km


def test_permutation_invariance():
    pred, gt = rand_depths(seed=6)
    r1 = compute_metrics(pred, gt, np.ones_like(gt))
    perm = np.random.default_rng(0).permutation(pred.size)
    r2 = compute_metrics(pred.reshape(-1)[perm].reshape(pred.shape),
                         gt.reshape(-1)[perm].reshape(gt.shape), np.ones_like(gt))
    assert r1.rmse_mm == pytest.approx(r2.rmse_mm)
    assert r1.absrel == pytest.approx(r2.absrel)


def test_scaling_behavior():
    pred, gt = rand_depths(seed=7)
    ones = np.ones_like(gt)
    base = compute_metrics(pred, gt, ones)
    c = 2.5
    scaled = compute_metrics(c * pred, c * gt, ones)
    assert scaled.rmse_mm == pytest.approx(c * base.rmse_mm)
    assert scaled.mae_mm == pytest.approx(c * base.mae_mm)
    assert scaled.irmse_per_km == pytest.approx(base.irmse_per_km / c)
    assert scaled.imae_per_km == pytest.approx(base.imae_per_km / c)
    assert scaled.absrel == pytest.approx(base.absrel)


def test_mask_restricts_support():
    pred, gt = rand_depths(seed=8)
    v = np.zeros_like(gt)
    v.reshape(-1)[:10] = 1
    r = compute_metrics(pred, gt, v)
    assert r.n_valid == 10
    sub = compute_metrics(pred.reshape(-1)[:10].reshape(1, 1, 10),
                          gt.reshape(-1)[:10].reshape(1, 1, 10), np.ones((1, 1, 10)))
    assert r.rmse_mm == pytest.approx(sub.rmse_mm)


def test_empty_mask_rejected():
    pred, gt = rand_depths(seed=9)
    with pytest.raises(ValueError, match="empty"):
        compute_metrics(pred, gt, np.zeros_like(gt))


def test_nonpositive_depth_rejected():
    gt = np.array([[[1.0, 2.0]]])
    pred = np.array([[[1.0, -0.5]]])
    with pytest.raises(ValueError, match="non-positive"):
        compute_metrics(pred, gt, np.ones_like(gt))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="shapes differ"):
        compute_metrics(np.ones((1, 2)), np.ones((1, 3)), np.ones((1, 3)))


def test_aggregate_mean_of_per_image():
    results = [
        EvalResult(1000.0, 800.0, 10.0, 8.0, 0.1, 100),
        EvalResult(2000.0, 1000.0, 20.0, 10.0, 0.3, 300),
    ]
    agg = aggregate(results)
    assert agg.rmse_mm == pytest.approx(1500.0)
    assert agg.absrel == pytest.approx(0.2)
    assert agg.n_valid == 400


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([])
