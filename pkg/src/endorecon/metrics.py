"""Depth-map evaluation metrics and sequence-level aggregation.

All metrics operate over the jointly valid pixel set of the two rasters.
Structural similarity uses an unweighted 7x7 sliding window restricted to
windows whose pixels are all jointly valid, with unbiased (n-1) variance and
covariance estimates to match the convention of the usual library default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depth_io import DepthMap, fit_scale

SSIM_WINDOW = 7
_K1 = 0.01
_K2 = 0.03


def _joint(pred: DepthMap, gt: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch: %r vs %r" % (pred.shape, gt.shape))
    joint = pred.mask & gt.mask
    if not joint.any():
        raise ValueError("no jointly valid pixels")
    return pred.values[joint], gt.values[joint]


def rmse(pred: DepthMap, gt: DepthMap) -> float:
    p, g = _joint(pred, gt)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def mae(pred: DepthMap, gt: DepthMap) -> float:
    p, g = _joint(pred, gt)
    return float(np.mean(np.abs(p - g)))


def sq_rel(pred: DepthMap, gt: DepthMap) -> float:
    """Mean of (pred - gt)^2 / gt; pixels with gt <= 0 are skipped."""
    p, g = _joint(pred, gt)
    keep = g > 0
    if not keep.any():
        raise ValueError("no valid pixels with positive ground truth")
    p, g = p[keep], g[keep]
    return float(np.mean((p - g) ** 2 / g))


def delta_accuracy(pred: DepthMap, gt: DepthMap, threshold: float = 1.25) -> float:
    """Fraction of pixels whose max/min depth ratio is strictly below the threshold."""
    p, g = _joint(pred, gt)
    keep = g > 0
    if not keep.any():
        raise ValueError("no valid pixels with positive ground truth")
    p, g = p[keep], g[keep]
    if np.any(p <= 0):
        raise ValueError("delta accuracy needs positive predicted depth on valid pixels")
    ratio = np.maximum(p / g, g / p)
    return float(np.mean(ratio < threshold))


def log_rmse(pred: DepthMap, gt: DepthMap) -> float:
    """Root mean squared difference of natural logs; gt <= 0 pixels are skipped."""
    p, g = _joint(pred, gt)
    keep = g > 0
    if not keep.any():
        raise ValueError("no valid pixels with positive ground truth")
    p, g = p[keep], g[keep]
    if np.any(p <= 0):
        raise ValueError("log RMSE needs positive predicted depth on valid pixels")
    return float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2)))


def ssim(pred: DepthMap, gt: DepthMap) -> float:
    """Mean structural similarity over fully valid 7x7 windows.

    The stabilizing constants are (0.01 L)^2 and (0.03 L)^2 with L the larger
    of the two rasters' maxima over jointly valid pixels.
    """
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch: %r vs %r" % (pred.shape, gt.shape))
    joint = pred.mask & gt.mask
    if not joint.any():
        raise ValueError("no jointly valid pixels")
    h, w = pred.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(
            "raster %dx%d too small for a %dx%d window" % (h, w, SSIM_WINDOW, SSIM_WINDOW)
        )
    win = SSIM_WINDOW
    x_win = np.lib.stride_tricks.sliding_window_view(pred.values, (win, win))
    y_win = np.lib.stride_tricks.sliding_window_view(gt.values, (win, win))
    ok_win = np.lib.stride_tricks.sliding_window_view(joint, (win, win)).all(axis=(2, 3))
    if not ok_win.any():
        raise ValueError("valid region admits no full %dx%d window" % (win, win))
    x = x_win[ok_win].reshape(-1, win * win)
    y = y_win[ok_win].reshape(-1, win * win)

    data_range = max(float(pred.values[joint].max()), float(gt.values[joint].max()))
    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2

    n = win * win
    mu_x = x.mean(axis=1)
    mu_y = y.mean(axis=1)
    # Unbiased second moments (divide by n - 1).
    var_x = ((x - mu_x[:, None]) ** 2).sum(axis=1) / (n - 1)
    var_y = ((y - mu_y[:, None]) ** 2).sum(axis=1) / (n - 1)
    cov = ((x - mu_x[:, None]) * (y - mu_y[:, None])).sum(axis=1) / (n - 1)
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(score.mean())


@dataclass
class FrameMetrics:
    frame: int
    rmse: float
    mae: float
    sq_rel: float
    delta_accuracy: float
    ssim: float
    log_rmse: float
    excluded_nonpositive_gt: int
    scale: float = 1.0

    METRIC_FIELDS = ("rmse", "mae", "sq_rel", "delta_accuracy", "ssim", "log_rmse")


@dataclass
class MetricReport:
    per_frame: list[FrameMetrics] = field(default_factory=list)
    means: dict[str, float] = field(default_factory=dict)
    spikes: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "per_frame": [
                {
                    "frame": f.frame,
                    "rmse": f.rmse,
                    "mae": f.mae,
                    "sq_rel": f.sq_rel,
                    "delta_accuracy": f.delta_accuracy,
                    "ssim": f.ssim,
                    "log_rmse": f.log_rmse,
                    "excluded_nonpositive_gt": f.excluded_nonpositive_gt,
                    "scale": f.scale,
                }
                for f in self.per_frame
            ],
            "means": dict(self.means),
            "spikes": list(self.spikes),
        }


def flag_spikes(values: list[float]) -> list[int]:
    """Indices whose value exceeds median + 3 * scaled median absolute deviation."""
    arr = np.asarray(values, dtype=np.float64)
    med = float(np.median(arr))
    mad = float(np.median(np.abs(arr - med)))
    cutoff = med + 3.0 * 1.4826 * mad
    return [i for i, v in enumerate(arr) if v > cutoff]


def evaluate_sequence(
    preds: list[DepthMap], gts: list[DepthMap], scale_align: bool = True
) -> MetricReport:
    """Per-frame metrics, their means, and error-spike flags for a sequence.

    With ``scale_align`` each prediction is multiplied by its least-squares
    scale against the ground truth before metrics are computed.
    """
    if len(preds) != len(gts):
        raise ValueError("sequence length mismatch: %d vs %d" % (len(preds), len(gts)))
    if not preds:
        raise ValueError("empty sequence")
    report = MetricReport()
    for frame, (pred, gt) in enumerate(zip(preds, gts)):
        try:
            scale = fit_scale(pred, gt) if scale_align else 1.0
            scaled = DepthMap(pred.values * scale, pred.mask.copy(), pred.kind)
            joint = scaled.mask & gt.mask
            excluded = int(np.sum(joint & (gt.values <= 0)))
            report.per_frame.append(
                FrameMetrics(
                    frame=frame,
                    rmse=rmse(scaled, gt),
                    mae=mae(scaled, gt),
                    sq_rel=sq_rel(scaled, gt),
                    delta_accuracy=delta_accuracy(scaled, gt),
                    ssim=ssim(scaled, gt),
                    log_rmse=log_rmse(scaled, gt),
                    excluded_nonpositive_gt=excluded,
                    scale=scale,
                )
            )
        except ValueError as exc:
            raise ValueError("frame %d: %s" % (frame, exc)) from exc
    for name in FrameMetrics.METRIC_FIELDS:
        report.means[name] = float(np.mean([getattr(f, name) for f in report.per_frame]))
    report.spikes = flag_spikes([f.rmse for f in report.per_frame])
    return report
