import math

import pytest
import torch

from atfnet.config import LossConfig
from atfnet.errors import ShapeError
from atfnet.losses import boundary_weights, ppa_loss, total_loss
from atfnet.nets.model import SaliencyOutputs

from conftest import check_gradients


def test_hand_computed_case():
    # all-background 2x2 truth against a uniform 0.5 prediction:
    # weights are 1 everywhere, BCE = ln 2, IoU term = 1 - 1/3
    gt = torch.zeros(2, 2, dtype=torch.float64)
    pred = torch.full((2, 2), 0.5, dtype=torch.float64)
    val = float(ppa_loss(pred, gt))
    expected = math.log(2.0) + (1.0 - 1.0 / 3.0)
    assert val == pytest.approx(expected, abs=1e-4)
    assert val == pytest.approx(1.3598, abs=1e-4)


def test_perfect_prediction_near_zero():
    gen = torch.Generator().manual_seed(0)
    gt = (torch.rand(16, 16, generator=gen) > 0.5).double()
    assert gt.sum() > 0
    val = float(ppa_loss(gt.clone(), gt))
    assert 0.0 <= val < 1e-5


def test_nonnegative_on_random_inputs():
    gen = torch.Generator().manual_seed(1)
    for _ in range(50):
        gt = (torch.rand(9, 9, generator=gen) > 0.6).double()
        pred = torch.rand(9, 9, generator=gen, dtype=torch.float64)
        assert float(ppa_loss(pred, gt)) >= 0.0


def test_weights_floor_and_boundary_emphasis():
    cfg = LossConfig()
    gt = torch.zeros(1, 1, 40, 40)
    gt[..., 10:20, 10:20] = 1.0
    w = boundary_weights(gt, cfg)
    assert (w >= 1.0).all()
    # far from the boundary and away from image borders the weight is exactly 1
    assert w[0, 0, 35, 35] == pytest.approx(1.0)
    # next to the mask boundary it is strictly larger
    assert w[0, 0, 10, 10] > 1.5


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        ppa_loss(torch.rand(4, 4), torch.zeros(5, 5))


def test_gradient_check_3x3():
    torch.manual_seed(0)
    gen = torch.Generator().manual_seed(2)
    gt = (torch.rand(3, 3, generator=gen) > 0.5).double()
    pred = torch.rand(3, 3, generator=gen, dtype=torch.float64) * 0.8 + 0.1
    check_gradients(lambda: ppa_loss(pred, gt), [pred])


def _outputs(m, with_branches=True):
    return SaliencyOutputs(
        s_rgb=m.clone(),
        s_flow=m.clone() if with_branches else None,
        s_depth=m.clone() if with_branches else None,
        s_f=m.clone(),
    )


def test_total_loss_perfect_prediction():
    gen = torch.Generator().manual_seed(3)
    gt = (torch.rand(1, 1, 16, 16, generator=gen) > 0.5).double()
    total, terms = total_loss(_outputs(gt), gt)
    assert float(total) < 4e-5
    assert set(terms) == {"rgb", "flow", "depth", "fused"}


def test_total_loss_lambda_zeroing():
    gen = torch.Generator().manual_seed(4)
    gt = (torch.rand(1, 1, 8, 8, generator=gen) > 0.5).double()
    pred = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)
    cfg = LossConfig(lambda1=0.0, lambda2=0.0, lambda3=0.0)
    total, terms = total_loss(_outputs(pred), gt, cfg)
    assert float(total) == pytest.approx(float(terms["rgb"]), rel=1e-12)


def test_total_loss_linearity():
    gen = torch.Generator().manual_seed(5)
    gt = (torch.rand(1, 1, 8, 8, generator=gen) > 0.5).double()
    pred = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)
    total, terms = total_loss(_outputs(pred), gt)
    assert float(total) == pytest.approx(4 * float(terms["rgb"]), rel=1e-9)


def test_total_loss_disabled_branches_contribute_zero():
    gen = torch.Generator().manual_seed(6)
    gt = (torch.rand(1, 1, 8, 8, generator=gen) > 0.5).double()
    pred = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)
    total, terms = total_loss(_outputs(pred, with_branches=False), gt)
    assert "flow" not in terms and "depth" not in terms
    assert float(total) == pytest.approx(2 * float(terms["rgb"]), rel=1e-9)


def test_batched_mean_matches_singles():
    gen = torch.Generator().manual_seed(7)
    gt = (torch.rand(3, 1, 8, 8, generator=gen) > 0.5).double()
    pred = torch.rand(3, 1, 8, 8, generator=gen, dtype=torch.float64)
    batched = float(ppa_loss(pred, gt))
    singles = [float(ppa_loss(pred[i], gt[i])) for i in range(3)]
    assert batched == pytest.approx(sum(singles) / 3, rel=1e-12)
