"""Depth and pose error metrics, plus the training losses as measurements.

Depth metrics use the DeMoN / Eigen conventions:

* ``l1_inv``  mean |1/pred - 1/gt|
* ``sc_inv``  standard deviation of ``log(pred) - log(gt)``
* ``l1_rel``  mean |pred - gt| / gt  (same quantity as ``abs_rel``)
* ``delta_t`` percentage of pixels with ``max(pred/gt, gt/pred) < 1.25**t``

Pose errors are the geodesic angle of ``R_pred R_gt^T`` and the angle
between the translation directions, both in degrees.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import Pose, matrix_to_euler


@dataclass(frozen=True)
class DepthMetrics:
    l1_inv: float
    sc_inv: float
    l1_rel: float
    abs_rel: float
    abs_diff: float
    sq_rel: float
    rms: float
    log_rms: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class PoseMetrics:
    rot_deg: float
    trans_deg: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class LossWeights:
    lambda_coarse: float = 0.7
    lambda_r: float = 0.8
    lambda_t: float = 0.1
    lambda_d: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    depth: float
    rotation: float
    translation: float
    final: float


def joint_valid(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return np.isfinite(pred) & np.isfinite(gt) & (pred > 0) & (gt > 0)


def depth_metrics(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None) -> DepthMetrics:
    valid = joint_valid(pred, gt)
    if mask is not None:
        valid &= mask
    if not valid.any():
        raise ValueError("prediction and ground truth share no valid pixel")
    p = np.asarray(pred, dtype=float)[valid]
    g = np.asarray(gt, dtype=float)[valid]

    diff = p - g
    z = np.log(p / g)
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        l1_inv=float(np.mean(np.abs(1.0 / p - 1.0 / g))),
        sc_inv=float(np.sqrt(np.mean((z - z.mean()) ** 2))),
        l1_rel=float(np.mean(np.abs(diff) / g)),
        abs_rel=float(np.mean(np.abs(diff) / g)),
        abs_diff=float(np.mean(np.abs(diff))),
        sq_rel=float(np.mean(diff**2 / g)),
        rms=float(np.sqrt(np.mean(diff**2))),
        log_rms=float(np.sqrt(np.mean(z**2))),
        delta1=float(100.0 * np.mean(ratio < 1.25)),
        delta2=float(100.0 * np.mean(ratio < 1.25**2)),
        delta3=float(100.0 * np.mean(ratio < 1.25**3)),
    )


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle (radians) of a rotation matrix; accurate near 0 and pi."""
    s = 0.5 * math.sqrt(
        (R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2
    )
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    return math.atan2(s, c)


def vector_angle(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


def pose_metrics(pred: Pose, gt: Pose) -> PoseMetrics:
    if not np.any(gt.translation):
        raise ValueError("ground-truth translation is zero; direction error undefined")
    rot = rotation_angle(pred.rotation @ gt.rotation.T)
    if np.any(pred.translation):
        trans = vector_angle(pred.translation, gt.translation)
    else:
        trans = math.pi / 2
    return PoseMetrics(math.degrees(rot), math.degrees(trans))


def huber(residual: np.ndarray, delta: float = 1.0) -> np.ndarray:
    a = np.abs(residual)
    return np.where(a <= delta, 0.5 * a**2, delta * (a - 0.5 * delta))


def huber_inverse_depth(pred: np.ndarray, gt: np.ndarray, delta: float = 1.0) -> float:
    """Mean Huber penalty of inverse-depth residuals over jointly valid pixels."""
    valid = joint_valid(pred, gt)
    if not valid.any():
        raise ValueError("prediction and ground truth share no valid pixel")
    r = 1.0 / np.asarray(pred, dtype=float)[valid] - 1.0 / np.asarray(gt, dtype=float)[valid]
    return float(np.mean(huber(r, delta)))


def losses(
    pred_depth_coarse: np.ndarray,
    pred_depth: np.ndarray,
    gt_depth: np.ndarray,
    pred_pose: Pose,
    gt_pose: Pose,
    weights: LossWeights = LossWeights(),
    huber_delta: float = 1.0,
) -> LossBreakdown:
    l_depth = weights.lambda_coarse * huber_inverse_depth(
        pred_depth_coarse, gt_depth, huber_delta
    ) + huber_inverse_depth(pred_depth, gt_depth, huber_delta)
    l_rot = float(np.mean(np.abs(matrix_to_euler(pred_pose.rotation) - matrix_to_euler(gt_pose.rotation))))
    l_trans = float(np.mean(np.abs(pred_pose.translation - gt_pose.translation)))
    final = weights.lambda_r * l_rot + weights.lambda_t * l_trans + weights.lambda_d * l_depth
    return LossBreakdown(l_depth, l_rot, l_trans, final)


def format_table(rows: dict[str, dict[str, float]]) -> str:
    """Flat text table; one row per label, one column per metric."""
    if not rows:
        return ""
    cols = list(next(iter(rows.values())).keys())
    label_w = max(5, *(len(k) for k in rows))
    head = "name".ljust(label_w) + "".join(f"{c:>11}" for c in cols)
    lines = [head, "-" * len(head)]
    for label, vals in rows.items():
        lines.append(label.ljust(label_w) + "".join(f"{vals[c]:>11.5f}" for c in cols))
    return "\n".join(lines)


def format_keyvalue(values: dict[str, float], prefix: str = "") -> str:
    return "\n".join(f"{prefix}{k}={v!r}" for k, v in values.items())
