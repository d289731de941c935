import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grnet.exceptions import EmptyInputError, ShapeError
from grnet.metrics import (
    MetricReport,
    adaptive_f_beta,
    aggregate,
    f_beta,
    f_w_beta,
    mae,
    pr_curve,
)

from oracles import f_loop, mae_loop, pr_loop, wfm_loop


def _rect_instance(rng, max_side=8):
    h, w = rng.integers(3, max_side + 1, size=2)
    gt = np.zeros((h, w), np.uint8)
    r0, c0 = rng.integers(0, h), rng.integers(0, w)
    r1, c1 = rng.integers(r0, h), rng.integers(c0, w)
    gt[r0:r1 + 1, c0:c1 + 1] = 1
    return rng.random((h, w)), gt


# ---------------------------------------------------------------- MAE


def test_mae_cases():
    gt = np.array([[1, 0], [0, 1]])
    assert mae(gt.astype(float), gt) == 0
    assert mae(1.0 - gt, gt) == 1
    assert mae(np.full((2, 2), 0.5), gt) == 0.5


def test_mae_shape_mismatch():
    with pytest.raises(ShapeError):
        mae(np.zeros((2, 2)), np.zeros((3, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mae_complement_symmetry(seed):
    rng = np.random.default_rng(seed)
    pred, gt = rng.random((5, 6)), rng.integers(0, 2, (5, 6))
    assert mae(pred, gt) == pytest.approx(mae(1 - pred, 1 - gt), abs=1e-15)


# ---------------------------------------------------------------- PR curve


def test_pr_perfect_binary_prediction():
    gt = np.zeros((4, 4), np.uint8)
    gt[1:3, 1:3] = 1
    pr = pr_curve(gt.astype(float), gt)
    assert pr.shape == (256, 2)
    assert np.all(pr[1:] == 1.0)


def test_pr_all_ones_prediction():
    gt = np.zeros((4, 4), np.uint8)
    gt[0, :3] = 1
    pr = pr_curve(np.ones((4, 4)), gt)
    assert np.all(pr[:, 1] == 1.0)
    assert np.allclose(pr[:, 0], 3 / 16)


def test_pr_empty_positive_threshold_has_unit_precision():
    gt = np.zeros((3, 3), np.uint8)
    gt[1, 1] = 1
    pr = pr_curve(np.full((3, 3), 0.1), gt)
    assert pr[255, 0] == 1.0 and pr[255, 1] == 0.0


def test_pr_thresholds_inclusive():
    # pred exactly at k/255 is positive at threshold k/255
    pred = np.array([[128 / 255, 0.0]])
    gt = np.array([[1, 0]])
    pr = pr_curve(pred, gt)
    assert pr[128, 1] == 1.0 and pr[129, 1] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_recall_non_increasing(seed):
    rng = np.random.default_rng(seed)
    pr = pr_curve(rng.random((6, 6)), rng.integers(0, 2, (6, 6)))
    assert np.all(np.diff(pr[:, 1]) <= 0)


# ---------------------------------------------------------------- F-measure


@pytest.mark.parametrize("p", [0.0, 0.1, 0.37, 0.5, 0.999, 1.0])
def test_f_beta_identity(p):
    assert f_beta(p, p) == pytest.approx(p, abs=1e-12)


def test_f_beta_degenerate_and_example():
    assert f_beta(1.0, 0.0) == 0.0
    assert f_beta(0.0, 0.0) == 0.0
    assert f_beta(0.8, 0.5) == pytest.approx(0.52 / 0.74, abs=1e-12)
    assert f_beta(0.8, 0.5) == pytest.approx(0.7027, abs=5e-5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(1e-4, 0.009))
def test_f_beta_strictly_increasing(p, r, d):
    base = f_beta(p, r)
    assert f_beta(p + d, r) > base
    assert f_beta(p, r + d) > base


def test_f_beta_vectorized():
    out = f_beta(np.array([0.5, 1.0]), np.array([0.5, 0.0]))
    assert np.allclose(out, [0.5, 0.0])


# ---------------------------------------------------------------- weighted F


def test_wfm_perfect():
    gt = np.zeros((6, 6), np.uint8)
    gt[2:4, 1:5] = 1
    assert f_w_beta(gt.astype(float), gt) == pytest.approx(1.0, abs=1e-12)


def test_wfm_all_zero_prediction():
    gt = np.zeros((14, 14), np.uint8)
    gt[5:9, 5:9] = 1
    assert f_w_beta(np.zeros((14, 14)), gt) == pytest.approx(0.0, abs=1e-9)


def test_wfm_empty_gt_raises():
    with pytest.raises(ValueError):
        f_w_beta(np.zeros((3, 3)), np.zeros((3, 3)))


def test_wfm_worked_5x5_instance():
    gt = np.zeros((5, 5), np.uint8)
    gt[1:3, 2:4] = 1
    pred = np.linspace(0, 1, 25).reshape(5, 5)
    assert f_w_beta(pred, gt) == pytest.approx(wfm_loop(pred, gt), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_wfm_bounded(seed):
    rng = np.random.default_rng(seed)
    pred, gt = _rect_instance(rng)
    assert 0.0 <= f_w_beta(pred, gt) <= 1.0


def test_wfm_general_mask_with_flat_foreground_error():
    # nearest-foreground ties cannot matter when every foreground error is equal
    rng = np.random.default_rng(3)
    for _ in range(20):
        gt = (rng.random((7, 7)) > 0.6).astype(np.uint8)
        if not gt.any():
            continue
        pred = np.where(gt == 1, 0.7, rng.random((7, 7)))
        assert f_w_beta(pred, gt) == pytest.approx(wfm_loop(pred, gt), abs=1e-9)


# ---------------------------------------------------------------- aggregate


def test_aggregate_single_sample_matches_per_sample():
    rng = np.random.default_rng(0)
    pred, gt = _rect_instance(rng)
    rep = aggregate([(pred, gt)])
    assert rep.n_samples == 1
    assert rep.mae == mae(pred, gt)
    assert rep.f_w_beta == f_w_beta(pred, gt)
    assert rep.f_beta_adaptive == adaptive_f_beta(pred, gt)
    pr = pr_curve(pred, gt)
    assert np.array_equal(rep.pr, pr)
    assert rep.f_beta_max == pytest.approx(max(f_loop(p, r) for p, r in pr), abs=1e-12)


def test_aggregate_duplicate_is_idempotent():
    rng = np.random.default_rng(1)
    s = _rect_instance(rng)
    one, two = aggregate([s]), aggregate([s, s])
    assert one.scalars() == pytest.approx(two.scalars(), abs=1e-15)
    assert np.allclose(one.pr, two.pr)


def test_aggregate_two_samples_hand_average():
    rng = np.random.default_rng(2)
    a, b = _rect_instance(rng, 6), _rect_instance(rng, 6)
    rep = aggregate([a, b])
    assert rep.mae == pytest.approx((mae_loop(*a) + mae_loop(*b)) / 2, abs=1e-12)
    assert rep.f_w_beta == pytest.approx((wfm_loop(*a) + wfm_loop(*b)) / 2, abs=1e-9)
    pr = (pr_loop(*a) + pr_loop(*b)) / 2
    assert np.allclose(rep.pr, pr, atol=1e-12)
    assert rep.f_beta_max == pytest.approx(max(f_loop(p, r) for p, r in pr), abs=1e-12)


def test_aggregate_empty():
    with pytest.raises(EmptyInputError):
        aggregate([])


def test_adaptive_threshold_clamped():
    gt = np.zeros((4, 4), np.uint8)
    gt[0] = 1
    pred = np.full((4, 4), 0.9)  # 2 * mean = 1.8 -> threshold 1.0, nothing positive
    assert adaptive_f_beta(pred, gt) == 0.0


def test_report_serialization():
    rng = np.random.default_rng(4)
    rep = aggregate([_rect_instance(rng)])
    text = rep.to_text()
    assert "f_w_beta=" in text and "n_samples=1" in text
    lines = rep.to_csv("synth", "grnet").strip().splitlines()
    assert lines[0] == "dataset,model,metric,value"
    assert len(lines) == 1 + len(MetricReport.SCALARS) + 1
    assert all(l.startswith("synth,grnet,") for l in lines[1:])
    for v in rep.scalars().values():
        assert 0.0 <= v <= 1.0
