"""Pose and 2D-projection evaluation metrics.

Angles are reported in degrees and translations in millimeters. The 0-5 mm
average-accuracy curve is integrated on a fixed uniform grid of 50 thresholds
(0.1 mm steps); the grid is exposed as AVG_ACC_THRESHOLDS_MM so downstream
reports can document it.
"""
from __future__ import annotations

import numpy as np

from .geometry import RigidPose
from .surface import Keypoint2D, SurfaceModel

AVG_ACC_THRESHOLDS_MM = np.round(np.arange(1, 51) * 0.1, 10)  # 0.1 .. 5.0 mm
OKS_MAP_THRESHOLDS = np.round(0.50 + 0.05 * np.arange(10), 10)  # 0.50 .. 0.95


def rotation_error(pred: RigidPose, gt: RigidPose) -> float:
    """Geodesic angle between the two rotations, in degrees."""
    cos = (np.trace(gt.rotation.T @ pred.rotation) - 1.0) / 2.0
    cos = np.clip(cos, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def translation_error(pred: RigidPose, gt: RigidPose) -> float:
    """Euclidean distance between the two translations, in mm."""
    return float(np.linalg.norm(pred.translation - gt.translation))


def add_metric(pred: RigidPose, gt: RigidPose, model: SurfaceModel) -> float:
    """Mean distance between model vertices transformed by the two poses (mm)."""
    a = pred.transform(model.vertices)
    b = gt.transform(model.vertices)
    return float(np.linalg.norm(a - b, axis=1).mean())


def add10_accuracy(samples, model: SurfaceModel) -> float:
    """Fraction of (pred, gt) pairs with ADD below 10% of the model diameter."""
    if not samples:
        raise ValueError("need at least one sample")
    threshold = 0.1 * model.diameter
    hits = sum(1 for pred, gt in samples if add_metric(pred, gt, model) < threshold)
    return hits / len(samples)


def avg_accuracy_0_5mm(samples, model: SurfaceModel) -> float:
    """Area under the ADD accuracy curve over 0-5 mm, as a percentage.

    Mean over the 50-point threshold grid of the fraction of samples whose
    ADD falls strictly below each threshold.
    """
    if not samples:
        raise ValueError("need at least one sample")
    adds = np.array([add_metric(pred, gt, model) for pred, gt in samples])
    acc = [(adds < tau).mean() for tau in AVG_ACC_THRESHOLDS_MM]
    return float(np.mean(acc) * 100.0)


def accuracy_curve(add_values) -> np.ndarray:
    """Per-threshold accuracies on the fixed 0-5 mm grid for a set of ADD values."""
    adds = np.asarray(add_values, dtype=np.float64)
    return np.array([(adds < tau).mean() for tau in AVG_ACC_THRESHOLDS_MM])


def oks(pred_kps, gt_kps, scale: float, sigma: float = 0.1) -> float:
    """Object keypoint similarity averaged over visible ground-truth keypoints.

    `scale` is the object scale s (sqrt of the reference bounding-box area,
    in pixels); each keypoint contributes exp(-d^2 / (2 s^2 sigma^2)).
    """
    if len(pred_kps) != len(gt_kps):
        raise ValueError("keypoint lists must have equal length")
    if scale <= 0:
        raise ValueError("scale must be positive")
    total = 0.0
    visible = 0
    for p, g in zip(pred_kps, gt_kps):
        if not g.visible:
            continue
        d2 = (p.x - g.x) ** 2 + (p.y - g.y) ** 2
        total += np.exp(-d2 / (2.0 * scale * scale * sigma * sigma))
        visible += 1
    if visible == 0:
        raise ValueError("no visible ground-truth keypoint")
    return float(total / visible)


def map_over_oks(frame_oks) -> float:
    """Mean, over OKS thresholds 0.50:0.05:0.95, of the per-threshold pass rate."""
    vals = np.asarray(frame_oks, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("need at least one frame")
    return float(np.mean([(vals >= t).mean() for t in OKS_MAP_THRESHOLDS]))


def dice(pred_mask, gt_mask) -> float:
    """Dice overlap of two binary masks; two empty masks count as 1.0."""
    a = np.asarray(pred_mask).astype(bool)
    b = np.asarray(gt_mask).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / denom)


def metric_csv_header() -> list[str]:
    cols = ["frame_id", "re_deg", "te_mm", "add_mm", "add10_pass"]
    cols += [f"acc_{tau:.1f}mm" for tau in AVG_ACC_THRESHOLDS_MM]
    return cols


def metric_csv_row(frame_id, pred: RigidPose, gt: RigidPose, model: SurfaceModel) -> list:
    """One evaluation row: errors plus the per-threshold accuracy vector."""
    add = add_metric(pred, gt, model)
    row = [frame_id,
           rotation_error(pred, gt),
           translation_error(pred, gt),
           add,
           int(add < 0.1 * model.diameter)]
    row += [int(add < tau) for tau in AVG_ACC_THRESHOLDS_MM]
    return row
