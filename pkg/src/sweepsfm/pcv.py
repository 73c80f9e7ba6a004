"""Pose sweep: score hypothetical camera poses around an initialization.

Candidates perturb either the rotation (Euler deltas, right-multiplied) or
the translation (additive deltas), never both. Each candidate warps the
source views into the target through the fixed target depth and is scored
by the same photometric + geometric cost the depth sweep uses, averaged
over covered pixels and then over sources.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .dcv import _active_channels, softmax_weights
from .geometry import CameraIntrinsics, Pose, euler_to_matrix


@dataclass(frozen=True)
class PoseCandidateSet:
    """``P`` poses around ``center``; row ``p`` of ``euler`` / ``trans`` is its delta."""

    center: Pose
    euler: np.ndarray
    trans: np.ndarray
    rot_bin: float
    trans_bin: float

    def __len__(self) -> int:
        return len(self.euler)

    @property
    def rotations(self) -> np.ndarray:
        return self.center.rotation @ euler_to_matrix(self.euler)

    @property
    def translations(self) -> np.ndarray:
        return self.center.translation + self.trans

    @property
    def candidates(self) -> list[Pose]:
        return [Pose.from_matrix(R, t) for R, t in zip(self.rotations, self.translations)]

    def center_index(self) -> int:
        idx = np.flatnonzero(~self.euler.any(axis=1) & ~self.trans.any(axis=1))
        return int(idx[0])


def _axis_grid(n: int) -> np.ndarray:
    k = (n - 1) // 2
    ax = np.arange(-k, k + 1, dtype=float)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    return g


def sample_poses(
    center: Pose,
    rot_bin: float = 0.035,
    trans_bin_scale: float = 0.10,
    n_per_axis: int = 5,
    n_trans_per_axis: int | None = None,
) -> PoseCandidateSet:
    """Rotation grid and translation grid around ``center`` sharing one center entry.

    With ``n`` steps per axis on both grids there are ``2 n^3 - 1`` candidates.
    The translation step is ``trans_bin_scale * |center.translation|``; when
    that norm is zero only the rotation grid is produced.
    """
    n_trans = n_per_axis if n_trans_per_axis is None else n_trans_per_axis
    for n in (n_per_axis, n_trans):
        if n < 1 or n % 2 == 0:
            raise ValueError(f"grid size per axis must be odd and >= 1, got {n}")
    trans_bin = trans_bin_scale * float(np.linalg.norm(center.translation))

    rot = _axis_grid(n_per_axis) * rot_bin
    eulers = [rot]
    transs = [np.zeros_like(rot)]
    if trans_bin > 0:
        tg = _axis_grid(n_trans)
        tg = tg[tg.any(axis=1)] * trans_bin
        eulers.append(np.zeros_like(tg))
        transs.append(tg)
    return PoseCandidateSet(center, np.concatenate(eulers), np.concatenate(transs), rot_bin, trans_bin)


def candidate_world_poses(candidates: PoseCandidateSet, frame: Pose | None = None):
    """Candidate rotations/translations as world-to-camera motions.

    Candidates are expressed relative to ``frame`` (world-to-``frame``); the
    result composes them with it. ``frame=None`` means candidates are already
    world poses.
    """
    R, t = candidates.rotations, candidates.translations
    if frame is None:
        return R, t
    return R @ frame.rotation, (R @ frame.translation) + t


def build_pcv(
    target_feat: np.ndarray,
    target_depth: np.ndarray,
    sources: Sequence[tuple[np.ndarray, np.ndarray, Pose]],
    K: CameraIntrinsics,
    candidates: PoseCandidateSet,
    frame: Pose | None = None,
    w_geo: float = 1.0,
    depth_warp: str = "nearest",
    geo_clip: float = np.inf,
) -> np.ndarray:
    """Score every candidate pose of the target camera; lower is better.

    Returns a length-``P`` array; ``inf`` marks candidates that see no source
    pixel through any valid target depth.
    """
    if not np.any(target_depth > 0):
        raise ValueError("target depth has no valid pixel")
    if not sources:
        raise ValueError("at least one source view is required")
    Rc, tc = candidate_world_poses(candidates, frame)
    ch = target_feat.shape[-1]
    per_source = []
    for feat, depth, pose in sources:
        if feat.shape != target_feat.shape or depth.shape != target_depth.shape:
            raise ValueError("source resolution does not match target")
        # relative motion target(candidate) -> source
        Rs = pose.rotation @ np.transpose(Rc, (0, 2, 1))
        ts = pose.translation - np.einsum("pij,pj->pi", Rs, tc)
        active = _active_channels(target_feat, feat)
        per_source.append(
            kernels.pcv_scores(
                target_feat[:, :, active],
                target_depth,
                feat[:, :, active],
                depth,
                K.as_tuple(),
                Rs,
                ts,
                w_geo,
                geo_clip,
                ch,
                depth_warp == "bilinear",
            )
        )
    stack = np.sort(np.stack(per_source), axis=0)
    return stack.sum(axis=0) / len(per_source)


def pose_weights(scores: np.ndarray, beta: float) -> np.ndarray:
    finite = np.isfinite(scores)
    if not finite.any():
        raise ValueError("all candidate scores are infinite")
    w = np.zeros(len(scores))
    w[finite] = softmax_weights(scores[finite], beta)
    return w


def regress_pose(scores: np.ndarray, candidates: PoseCandidateSet, beta: float = 10.0) -> Pose:
    """Soft-argmax in delta space, then applied to the center pose."""
    w = pose_weights(np.asarray(scores, dtype=float), beta)
    d_euler = w @ candidates.euler
    d_trans = w @ candidates.trans
    R = candidates.center.rotation @ euler_to_matrix(d_euler)
    return Pose.from_matrix(R, candidates.center.translation + d_trans)
