import numpy as np
import pytest

from atfnet.errors import EmptyGroundTruth, MissingPrediction, ShapeError
from atfnet.metrics import (e_measure, evaluate, f_measure, f_measure_adaptive, mae,
                            s_measure)

from metric_oracles import (oracle_e_measure, oracle_f_curve, oracle_f_measure,
                            oracle_mae, oracle_s_measure)


def _random_pair(rng, size=8, quantized=False):
    pred = rng.random((size, size))
    if quantized:
        pred = np.round(pred * 255) / 255.0
    gt = (rng.random((size, size)) > 0.6).astype(np.float64)
    if gt.sum() == 0:
        gt[rng.integers(size), rng.integers(size)] = 1.0
    return pred, gt


# --- hand-computed and identity cases --------------------------------------

def test_mae_hand_case():
    pred = np.array([[0.2, 0.8], [0.5, 0.0]])
    gt = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert mae(pred, gt) == pytest.approx(0.225, abs=1e-12)


def test_mae_identity_and_complement():
    rng = np.random.default_rng(0)
    gt = (rng.random((6, 6)) > 0.5).astype(np.float64)
    assert mae(gt, gt) == 0.0
    assert mae(1.0 - gt, gt) == 1.0


def test_mae_complement_identity_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred, gt = _random_pair(rng)
        assert mae(pred, gt) + mae(1.0 - pred, gt) == pytest.approx(1.0, abs=1e-12)


def test_f_identity_and_zero():
    rng = np.random.default_rng(2)
    gt = (rng.random((8, 8)) > 0.5).astype(np.float64)
    gt[0, 0] = 1.0
    best, curve = f_measure(gt, gt)
    assert best == pytest.approx(1.0)
    assert len(curve) == 256
    best0, _ = f_measure(np.zeros_like(gt), gt)
    assert best0 == 0.0


def test_f_hand_precision_half():
    gt = np.array([[1.0, 0.0], [0.0, 0.0]])
    pred = np.array([[0.9, 0.8], [0.1, 0.0]])
    _, curve = f_measure(pred, gt)
    expected = 1.3 * 0.5 * 1.0 / (0.3 * 0.5 + 1.0)
    assert any(abs(v - expected) < 1e-12 for v in curve)


def test_f_empty_gt_raises():
    with pytest.raises(EmptyGroundTruth):
        f_measure(np.random.rand(4, 4), np.zeros((4, 4)))


def test_f_adaptive_below_max_for_quantized():
    rng = np.random.default_rng(3)
    for _ in range(50):
        pred, gt = _random_pair(rng, quantized=True)
        best, _ = f_measure(pred, gt)
        assert best >= f_measure_adaptive(pred, gt) - 1e-12


def test_s_identity():
    rng = np.random.default_rng(4)
    gt = (rng.random((8, 8)) > 0.5).astype(np.float64)
    gt[2:5, 2:5] = 1.0
    assert s_measure(gt, gt) == pytest.approx(1.0, abs=1e-9)


def test_s_range_on_noise():
    rng = np.random.default_rng(5)
    for _ in range(20):
        pred, gt = _random_pair(rng)
        val = s_measure(pred, gt)
        assert 0.0 <= val <= 1.0 and np.isfinite(val)


def test_s_degenerate_gt_paths():
    pred = np.full((4, 4), 0.3)
    assert s_measure(pred, np.zeros((4, 4))) == pytest.approx(0.7)
    assert s_measure(pred, np.ones((4, 4))) == pytest.approx(0.3)


def test_e_identity_interior_thresholds():
    rng = np.random.default_rng(6)
    gt = (rng.random((8, 8)) > 0.5).astype(np.float64)
    gt[0, 0], gt[-1, -1] = 1.0, 0.0
    mean_val, curve = e_measure(gt, gt)
    # interior thresholds reproduce the mask exactly; only t=1 degenerates
    assert np.allclose(curve[:255], 1.0, atol=1e-5)
    assert mean_val > 0.99


def test_e_complement_small():
    rng = np.random.default_rng(7)
    for _ in range(10):
        gt = (rng.random((4, 4)) > 0.5).astype(np.float64)
        if gt.sum() in (0, 16):
            continue
        mean_val, curve = e_measure(1.0 - gt, gt)
        assert mean_val < 0.01
        assert all(v < 0.5 for v in curve)


def test_e_constant_maps_no_nan():
    val, _ = e_measure(np.full((4, 4), 0.5), np.zeros((4, 4)))
    assert np.isfinite(val)
    val, _ = e_measure(np.zeros((4, 4)), np.ones((4, 4)))
    assert np.isfinite(val)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        mae(np.zeros((3, 3)), np.zeros((4, 4)))


# --- oracle equivalence on random pairs -------------------------------------

def test_all_metrics_match_oracles_200_pairs():
    rng = np.random.default_rng(8)
    for i in range(200):
        pred, gt = _random_pair(rng)
        assert mae(pred, gt) == pytest.approx(oracle_mae(pred, gt), abs=1e-6)
        best, curve = f_measure(pred, gt)
        ocurve = oracle_f_curve(pred, gt)
        np.testing.assert_allclose(curve, ocurve, atol=1e-6)
        assert best == pytest.approx(oracle_f_measure(pred, gt), abs=1e-6)
        assert s_measure(pred, gt) == pytest.approx(oracle_s_measure(pred, gt), abs=1e-6)
        mean_e, _ = e_measure(pred, gt)
        assert mean_e == pytest.approx(oracle_e_measure(pred, gt), abs=1e-6), f"pair {i}"


# --- permutation structure ---------------------------------------------------

def test_pixelwise_metrics_permutation_invariant():
    rng = np.random.default_rng(9)
    pred, gt = _random_pair(rng)
    perm = rng.permutation(pred.size)
    pred_p = pred.reshape(-1)[perm].reshape(pred.shape)
    gt_p = gt.reshape(-1)[perm].reshape(gt.shape)
    assert mae(pred_p, gt_p) == pytest.approx(mae(pred, gt), abs=1e-12)
    assert f_measure(pred_p, gt_p)[0] == pytest.approx(f_measure(pred, gt)[0], abs=1e-12)
    # the alignment measure is per-pixel once binarized, so it is
    # permutation-invariant too
    assert e_measure(pred_p, gt_p)[0] == pytest.approx(e_measure(pred, gt)[0], abs=1e-9)


def test_structure_measure_not_permutation_invariant():
    rng = np.random.default_rng(10)
    diffs = []
    for _ in range(10):
        pred, gt = _random_pair(rng)
        perm = rng.permutation(pred.size)
        pred_p = pred.reshape(-1)[perm].reshape(pred.shape)
        gt_p = gt.reshape(-1)[perm].reshape(gt.shape)
        diffs.append(abs(s_measure(pred_p, gt_p) - s_measure(pred, gt)))
    assert max(diffs) > 1e-6


# --- dataset-level evaluation ------------------------------------------------

def test_evaluate_identity_predictions(fixture_root):
    from atfnet.dataio import load_layout, load_frame

    layout = load_layout(fixture_root, "train")
    preds = {}
    for vid, count in layout.videos:
        for i in range(count):
            preds[(vid, i)] = load_frame(layout, vid, i).gt[..., 0]
    report = evaluate(preds, layout)
    ov = report.overall
    assert ov["mae"] == pytest.approx(0.0, abs=1e-12)
    assert ov["max_f_measure"] == pytest.approx(1.0, abs=1e-9)
    assert ov["s_measure"] == pytest.approx(1.0, abs=1e-6)
    assert ov["e_measure"] > 0.99
    assert ov["frames"] == 20


def test_evaluate_constant_half(fixture_root):
    from atfnet.dataio import load_layout

    layout = load_layout(fixture_root, "train")
    preds = {(vid, i): np.full((64, 64), 0.5) for vid, n in layout.videos for i in range(n)}
    report = evaluate(preds, layout)
    assert report.overall["mae"] == pytest.approx(0.5, abs=1e-9)


def test_evaluate_missing_prediction_named(fixture_root):
    from atfnet.dataio import load_layout

    layout = load_layout(fixture_root, "train")
    preds = {("video000", i): np.zeros((64, 64)) for i in range(19)}  # frame 19 missing
    with pytest.raises(MissingPrediction) as exc:
        evaluate(preds, layout)
    assert "19" in str(exc.value)
