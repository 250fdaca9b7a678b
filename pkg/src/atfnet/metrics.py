"""Saliency evaluation: MAE, max F-measure, structure measure, enhanced
alignment measure, and dataset-level aggregation.

Conventions, recorded in every report:
  * F-measure uses beta^2 = 0.3, sweeps 256 thresholds k/255 (binarize at
    S > t, so an all-zero prediction is empty at every threshold), scores an
    empty prediction as 0, and reports the curve maximum.
  * The structure measure uses alpha = 0.5: an object-aware term on the
    foreground/background regions plus a four-quadrant SSIM term split at
    the foreground centroid; the result is clamped to [0, 1].
  * The enhanced alignment measure binarizes at the same 256 thresholds,
    compares mean-removed maps via xi = 2*a*b / (a^2 + b^2 + eps), scores
    mean((1 + xi)^2 / 4), and reports the mean over thresholds.
  * Aggregates are frame-weighted means of per-frame values. Frames with an
    all-background ground truth are excluded from the F-measure aggregate
    (and counted) because recall is undefined there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .dataio import DatasetLayout, _load_gt, iter_frames
from .errors import EmptyGroundTruth, MissingPrediction, ShapeError

BETA_SQUARED = 0.3
S_ALPHA = 0.5
THRESHOLD_COUNT = 256
THRESHOLDS = np.arange(THRESHOLD_COUNT) / 255.0
_EPS = 1e-12


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    pred, gt = np.squeeze(pred), np.squeeze(gt)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    return pred, (gt > 0.5).astype(np.float64)


def mae(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def _threshold_counts(pred, gt):
    """For every threshold k/255: (#pixels with S > t, #of those on foreground)."""
    flat = np.sort(pred.reshape(-1))
    fg = np.sort(pred[gt == 1.0].reshape(-1))
    pred_pos = flat.size - np.searchsorted(flat, THRESHOLDS, side="right")
    true_pos = fg.size - np.searchsorted(fg, THRESHOLDS, side="right")
    return pred_pos.astype(np.int64), true_pos.astype(np.int64)


def f_measure(pred, gt):
    """(max F_beta over 256 thresholds, the full curve)."""
    pred, gt = _check_pair(pred, gt)
    n_fg = int(gt.sum())
    if n_fg == 0:
        raise EmptyGroundTruth("ground truth has no foreground; recall is undefined")
    pred_pos, true_pos = _threshold_counts(pred, gt)
    curve = np.zeros(THRESHOLD_COUNT)
    nonempty = pred_pos > 0
    precision = np.zeros(THRESHOLD_COUNT)
    precision[nonempty] = true_pos[nonempty] / pred_pos[nonempty]
    recall = true_pos / n_fg
    denom = BETA_SQUARED * precision + recall
    ok = denom > 0
    curve[ok] = (1 + BETA_SQUARED) * precision[ok] * recall[ok] / denom[ok]
    return float(curve.max()), curve


def f_measure_adaptive(pred, gt) -> float:
    """F_beta binarized at twice the prediction mean (capped at 1)."""
    pred, gt = _check_pair(pred, gt)
    n_fg = int(gt.sum())
    if n_fg == 0:
        raise EmptyGroundTruth("ground truth has no foreground; recall is undefined")
    t = min(2.0 * pred.mean(), 1.0)
    binary = pred > t
    npos = int(binary.sum())
    if npos == 0:
        return 0.0
    tp = int((binary & (gt == 1.0)).sum())
    precision = tp / npos
    recall = tp / n_fg
    denom = BETA_SQUARED * precision + recall
    return (1 + BETA_SQUARED) * precision * recall / denom if denom > 0 else 0.0


def _object_score(values):
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + np.spacing(1))


def _ssim_region(pred, gt):
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    if n > 1:
        sx = ((pred - x) ** 2).sum() / (n - 1)
        sy = ((gt - y) ** 2).sum() / (n - 1)
        sxy = ((pred - x) * (gt - y)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    aleph = 4.0 * x * y * sxy
    beth = (x * x + y * y) * (sx + sy)
    if aleph != 0.0:
        return aleph / (beth + np.spacing(1))
    return 1.0 if beth == 0.0 else 0.0


def s_measure(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    mu = gt.mean()
    if mu == 0.0:                       # nothing salient: reward an empty prediction
        return float(np.clip(1.0 - pred.mean(), 0.0, 1.0))
    if mu == 1.0:                       # everything salient
        return float(np.clip(pred.mean(), 0.0, 1.0))

    fg_term = _object_score(pred[gt == 1.0])
    bg_term = _object_score((1.0 - pred)[gt == 0.0])
    s_object = mu * fg_term + (1.0 - mu) * bg_term

    rows, cols = np.nonzero(gt)
    h, w = gt.shape
    cy = min(max(int(round(rows.mean())), 1), h - 1)
    cx = min(max(int(round(cols.mean())), 1), w - 1)
    total = float(h * w)
    s_region = 0.0
    for rs, cs in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                   (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        weight = gt[rs, cs].size / total
        s_region += weight * _ssim_region(pred[rs, cs], gt[rs, cs])

    return float(np.clip(S_ALPHA * s_object + (1.0 - S_ALPHA) * s_region, 0.0, 1.0))


def _alignment_value(a, b):
    xi = 2.0 * a * b / (a * a + b * b + _EPS)
    return 0.25 * (1.0 + xi) ** 2


def e_measure(pred, gt):
    """(mean enhanced alignment over 256 thresholds, the full curve).

    Binary maps make the per-pixel alignment a function of the four
    (gt, pred) value combinations, so each threshold reduces to counts.
    """
    pred, gt = _check_pair(pred, gt)
    n = gt.size
    n_fg = int(gt.sum())
    mu_g = n_fg / n
    pred_pos, true_pos = _threshold_counts(pred, gt)

    curve = np.zeros(THRESHOLD_COUNT)
    for k in range(THRESHOLD_COUNT):
        npos = int(pred_pos[k])
        tp = int(true_pos[k])
        mu_b = npos / n
        # mean-removed values: foreground pixels carry 1-mu, background -mu
        counts = {
            (1, 1): tp,
            (1, 0): n_fg - tp,
            (0, 1): npos - tp,
            (0, 0): n - n_fg - (npos - tp),
        }
        acc = 0.0
        for (g_val, b_val), cnt in counts.items():
            if cnt == 0:
                continue
            a = g_val - mu_g
            b = b_val - mu_b
            acc += cnt * _alignment_value(a, b)
        curve[k] = acc / n
    return float(curve.mean()), curve


# ---------------------------------------------------------------------------
# Dataset-level evaluation
# ---------------------------------------------------------------------------

@dataclass
class VideoMetrics:
    frames: int = 0
    f_frames: int = 0
    empty_gt_frames: int = 0
    mae_sum: float = 0.0
    f_sum: float = 0.0
    s_sum: float = 0.0
    e_sum: float = 0.0

    def add(self, frame_mae, frame_f, frame_s, frame_e):
        self.frames += 1
        self.mae_sum += frame_mae
        self.s_sum += frame_s
        self.e_sum += frame_e
        if frame_f is None:
            self.empty_gt_frames += 1
        else:
            self.f_frames += 1
            self.f_sum += frame_f

    def merge(self, other: "VideoMetrics"):
        for name in ("frames", "f_frames", "empty_gt_frames",
                     "mae_sum", "f_sum", "s_sum", "e_sum"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def summary(self) -> dict:
        out = {
            "frames": self.frames,
            "empty_gt_frames": self.empty_gt_frames,
            "mae": self.mae_sum / self.frames if self.frames else float("nan"),
            "s_measure": self.s_sum / self.frames if self.frames else float("nan"),
            "e_measure": self.e_sum / self.frames if self.frames else float("nan"),
            "max_f_measure": self.f_sum / self.f_frames if self.f_frames else float("nan"),
        }
        return out


@dataclass
class MetricsReport:
    per_video: dict
    overall: dict
    f_curve: np.ndarray
    e_curve: np.ndarray
    constants: dict = field(default_factory=lambda: {
        "beta_squared": BETA_SQUARED,
        "alpha": S_ALPHA,
        "threshold_count": THRESHOLD_COUNT,
        "f_convention": "max over thresholds, frame-weighted mean",
        "e_convention": "mean over thresholds, frame-weighted mean",
    })


def _load_prediction(pred, video_id, index):
    if isinstance(pred, (str, Path)):
        path = Path(pred) / video_id / f"{index:05d}.png"
        if not path.is_file():
            raise MissingPrediction(f"no prediction for {video_id} frame {index} at {path}")
        return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
    try:
        return np.asarray(pred[(video_id, index)], dtype=np.float64)
    except KeyError:
        raise MissingPrediction(f"no prediction for {video_id} frame {index}") from None


def _resize_to(pred, shape):
    if pred.shape == shape:
        return pred
    img = Image.fromarray((np.clip(pred, 0, 1) * 255).astype(np.uint8))
    img = img.resize((shape[1], shape[0]), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def evaluate(predictions, layout: DatasetLayout) -> MetricsReport:
    """Score one prediction per ground-truth frame, at the GT resolution.

    ``predictions`` is a directory of <video_id>/%05d.png maps or a mapping
    from (video_id, frame_index) to arrays.
    """
    per_video: dict[str, VideoMetrics] = {}
    f_curve_sum = np.zeros(THRESHOLD_COUNT)
    e_curve_sum = np.zeros(THRESHOLD_COUNT)
    f_frames = 0
    e_frames = 0
    for video_id, index in iter_frames(layout):
        gt = _load_gt(layout.frame_paths(video_id, index)["gt"])[..., 0]
        pred = _resize_to(_load_prediction(predictions, video_id, index), gt.shape)
        frame_mae = mae(pred, gt)
        frame_s = s_measure(pred, gt)
        frame_e, e_curve = e_measure(pred, gt)
        e_curve_sum += e_curve
        e_frames += 1
        try:
            frame_f, f_curve = f_measure(pred, gt)
            f_curve_sum += f_curve
            f_frames += 1
        except EmptyGroundTruth:
            frame_f = None
        per_video.setdefault(video_id, VideoMetrics()).add(frame_mae, frame_f, frame_s, frame_e)

    overall = VideoMetrics()
    for vm in per_video.values():
        overall.merge(vm)
    return MetricsReport(
        per_video={vid: vm.summary() for vid, vm in sorted(per_video.items())},
        overall=overall.summary(),
        f_curve=f_curve_sum / max(f_frames, 1),
        e_curve=e_curve_sum / max(e_frames, 1),
    )
