"""Pixel-position-aware loss and the four-branch total.

Each pixel is weighted by 1 + gain * |avgpool(GT) - GT| (zero padding,
full-window divisor), so pixels near mask boundaries count more. The loss is
a weighted BCE plus a weighted IoU term:

    wBCE = sum(w * BCE(S, GT)) / sum(w)
    I    = sum(w * S * GT)
    U    = sum(w * (S + GT))
    wIoU = 1 - (I + s) / (U - I + s)

with smoothing constant s. Predictions are probabilities and get clamped to
[eps, 1-eps] before the logs. Both terms vanish as S approaches GT and the
whole thing stays nonnegative. Batched inputs are reduced per sample, then
averaged.
"""

import torch
import torch.nn.functional as F

from .config import LossConfig
from .errors import ShapeError

_DEFAULT = LossConfig()


def _as_nchw(x):
    if x.ndim == 2:
        return x[None, None]
    if x.ndim == 3:
        return x[None]
    if x.ndim == 4:
        return x
    raise ShapeError(f"expected a (H,W) / (1,H,W) / (N,1,H,W) map, got shape {tuple(x.shape)}")


def boundary_weights(gt, cfg: LossConfig = _DEFAULT):
    pad = cfg.weight_window // 2
    pooled = F.avg_pool2d(gt, kernel_size=cfg.weight_window, stride=1, padding=pad,
                          count_include_pad=True)
    return 1.0 + cfg.weight_gain * (pooled - gt).abs()


def ppa_loss(pred, gt, cfg: LossConfig = _DEFAULT):
    pred, gt = _as_nchw(pred), _as_nchw(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} vs ground truth {tuple(gt.shape)}")
    w = boundary_weights(gt, cfg)
    s = pred.clamp(cfg.clamp_eps, 1.0 - cfg.clamp_eps)
    bce = -(gt * s.log() + (1.0 - gt) * (1.0 - s).log())
    dims = (1, 2, 3)
    wbce = (w * bce).sum(dims) / w.sum(dims)
    inter = (w * s * gt).sum(dims)
    union = (w * (s + gt)).sum(dims)
    wiou = 1.0 - (inter + cfg.smoothing) / (union - inter + cfg.smoothing)
    return (wbce + wiou).mean()


def total_loss(outputs, gt, cfg: LossConfig = _DEFAULT):
    """Sum of per-branch losses; disabled branches contribute nothing.

    Returns (scalar, {"rgb": .., "depth": .., "flow": .., "fused": ..}).
    """
    terms = {"rgb": ppa_loss(outputs.s_rgb, gt, cfg)}
    weights = {"rgb": 1.0, "depth": cfg.lambda1, "flow": cfg.lambda2, "fused": cfg.lambda3}
    if outputs.s_depth is not None:
        terms["depth"] = ppa_loss(outputs.s_depth, gt, cfg)
    if outputs.s_flow is not None:
        terms["flow"] = ppa_loss(outputs.s_flow, gt, cfg)
    terms["fused"] = ppa_loss(outputs.s_f, gt, cfg)
    total = sum(weights[k] * v for k, v in terms.items())
    return total, terms
