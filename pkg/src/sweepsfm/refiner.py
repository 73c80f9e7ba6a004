"""Alternating depth / pose refinement.

Each iteration sweeps depth planes for every frame against all other
frames, then sweeps candidate poses for every frame except the anchor.
All reads come from a snapshot of the previous iteration (Jacobi update),
so the result does not depend on the order frames are visited in.

The anchor frame's pose is held fixed to pin the gauge; pose candidates for
the other frames are generated in the anchor's camera frame, where the
translation of a candidate is the baseline to the anchor.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from . import dcv, pcv
from .evaluation import depth_metrics, pose_metrics
from .features import STRIDE, FeatureConfig, extract_features
from .geometry import CameraIntrinsics, Pose, compose, relative

ORDERS = ("depth_pose", "pose_depth")


@dataclass(frozen=True)
class RefineConfig:
    iterations: int = 4
    planes: int = 64
    # None derives the nearest plane from the initial depths
    d_min: float | None = None
    d_min_margin: float = 0.8
    beta_depth: float = 300.0
    beta_pose: float = 300.0
    rot_bin: float = 0.035
    trans_bin_scale: float = 0.10
    rot_grid: int = 5
    trans_grid: int = 5
    w_geo: float = 1.0
    # truncation of the relative depth residual; inf disables it
    geo_clip: float = 0.1
    smooth_radii: tuple[int, int, int] = (1, 2, 2)
    depth_warp: str = "nearest"
    order: str = "depth_pose"
    # False holds depths fixed (known-depth pose refinement)
    update_depth: bool = True
    edge_aware: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if self.depth_warp not in dcv.DEPTH_WARPS:
            raise ValueError(f"depth_warp must be one of {dcv.DEPTH_WARPS}")


@dataclass
class GroundTruth:
    depths: list[np.ndarray]
    poses: list[Pose]


@dataclass
class SceneState:
    """Frames, their features and the current depth / pose estimates.

    ``K`` describes the input images; depth maps live on the feature grid
    (``K.downsample(4)``).
    """

    K: CameraIntrinsics
    images: list[np.ndarray]
    features: list[np.ndarray]
    depths: list[np.ndarray]
    poses: list[Pose]
    anchor: int = 0
    iteration: int = 0
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.images)
        if n < 2:
            raise ValueError("need at least two frames")
        if not (len(self.features) == len(self.depths) == len(self.poses) == n):
            raise ValueError("frames, features, depths and poses must have equal lengths")
        if not 0 <= self.anchor < n:
            raise ValueError(f"anchor index {self.anchor} out of range")

    @property
    def n_frames(self) -> int:
        return len(self.images)

    @property
    def feature_K(self) -> CameraIntrinsics:
        return self.K.downsample(STRIDE)

    @classmethod
    def from_images(
        cls,
        images: Sequence[np.ndarray],
        K: CameraIntrinsics,
        poses: Sequence[Pose],
        depths: Sequence[np.ndarray],
        anchor: int = 0,
        feature_config: FeatureConfig | None = None,
    ) -> "SceneState":
        Kf = K.downsample(STRIDE)
        feats = [extract_features(im, feature_config) for im in images]
        ds = [to_feature_grid(d, Kf) for d in depths]
        return cls(K, list(images), feats, ds, list(poses), anchor=anchor)

    def permuted(self, order: Sequence[int]) -> "SceneState":
        """Same scene with frames re-indexed; ``order[i]`` is the old index of new frame ``i``."""
        order = list(order)
        return replace(
            self,
            images=[self.images[i] for i in order],
            features=[self.features[i] for i in order],
            depths=[self.depths[i] for i in order],
            poses=[self.poses[i] for i in order],
            anchor=order.index(self.anchor),
            history=list(self.history),
        )


def to_feature_grid(depth: np.ndarray, Kf: CameraIntrinsics) -> np.ndarray:
    """Bring a depth map to the feature grid by nearest-neighbor decimation."""
    depth = np.asarray(depth, dtype=float)
    if depth.shape == (Kf.height, Kf.width):
        return depth
    if depth.shape != (Kf.height * STRIDE, Kf.width * STRIDE):
        raise ValueError(
            f"depth map {depth.shape} matches neither the image nor the feature grid "
            f"({Kf.height * STRIDE}x{Kf.width * STRIDE} / {Kf.height}x{Kf.width})"
        )
    c = STRIDE // 2
    return np.where(np.isfinite(depth), depth, 0.0)[c::STRIDE, c::STRIDE].copy()


def _translation_ref(state: SceneState) -> np.ndarray:
    for j in range(state.n_frames):
        if j == state.anchor:
            continue
        t = relative(state.poses[state.anchor], state.poses[j]).translation
        if np.any(t):
            return t
    raise ValueError("all relative translations are zero; scale is undefined")


def normalize_scale(state: SceneState, ref_norm: float = 1.0) -> SceneState:
    """Rescale translations and depths so the first nonzero baseline has norm ``ref_norm``."""
    if not ref_norm > 0:
        raise ValueError("ref_norm must be positive")
    s = ref_norm / float(np.linalg.norm(_translation_ref(state)))
    return replace(
        state,
        depths=[d * s for d in state.depths],
        poses=[p.scaled(s) for p in state.poses],
        history=list(state.history),
    )


def resolve_d_min(state: SceneState, config: RefineConfig) -> float:
    if config.d_min is not None:
        return float(config.d_min)
    valid = [d[d > 0] for d in state.depths]
    valid = [v for v in valid if v.size]
    if not valid:
        raise ValueError("no valid depth to derive d_min from; pass d_min explicitly")
    return config.d_min_margin * float(min(v.min() for v in valid))


def _sources(state: SceneState, target: int, poses, depths):
    return [
        (state.features[j], depths[j], poses[j]) for j in range(state.n_frames) if j != target
    ]


def _depth_step(state, config, planes, poses, depths, i):
    cost = dcv.depth_cost_volume(
        state.features[i],
        _sources(state, i, poses, depths),
        poses[i],
        state.feature_K,
        planes,
        w_geo=config.w_geo,
        radii=config.smooth_radii,
        depth_warp=config.depth_warp,
        edge_aware=config.edge_aware,
        geo_clip=config.geo_clip,
    )
    return dcv.regress_depth(cost, planes, config.beta_depth)


def _pose_step(state, config, poses, target_depth, src_depths, i):
    anchor_pose = poses[state.anchor]
    center = relative(anchor_pose, poses[i])
    cands = pcv.sample_poses(
        center,
        rot_bin=config.rot_bin,
        trans_bin_scale=config.trans_bin_scale,
        n_per_axis=config.rot_grid,
        n_trans_per_axis=config.trans_grid,
    )
    scores = pcv.build_pcv(
        state.features[i],
        target_depth,
        _sources(state, i, poses, src_depths),
        state.feature_K,
        cands,
        frame=anchor_pose,
        w_geo=config.w_geo,
        depth_warp=config.depth_warp,
        geo_clip=config.geo_clip,
    )
    return compose(pcv.regress_pose(scores, cands, config.beta_pose), anchor_pose)


def _map(config: RefineConfig, fn, items):
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def refine_once(state: SceneState, config: RefineConfig, d_min: float | None = None) -> SceneState:
    d_min = resolve_d_min(state, config) if d_min is None else d_min
    planes = dcv.sample_planes(d_min, config.planes)
    poses0 = list(state.poses)
    depths0 = list(state.depths)
    frames = range(state.n_frames)
    movable = [i for i in frames if i != state.anchor]

    def depth_pass(poses):
        if not config.update_depth:
            return depths0
        return _map(config, lambda i: _depth_step(state, config, planes, poses, depths0, i), frames)

    def pose_pass(target_depths):
        new = list(poses0)
        upd = _map(config, lambda i: _pose_step(state, config, poses0, target_depths[i], depths0, i), movable)
        for i, p in zip(movable, upd):
            new[i] = p
        return new

    if config.order == "depth_pose":
        depths = depth_pass(poses0)
        poses = pose_pass(depths)
    else:
        poses = pose_pass(depths0)
        depths = depth_pass(poses)
    return replace(state, depths=depths, poses=poses, iteration=state.iteration + 1, history=list(state.history))


def scene_metrics(state: SceneState, gt: GroundTruth) -> dict[str, float]:
    """Mean depth errors over frames and mean relative-pose errors over non-anchor frames."""
    dm = [depth_metrics(d, g) for d, g in zip(state.depths, gt.depths)]
    out = {
        "abs_rel": float(np.mean([m.abs_rel for m in dm])),
        "l1_inv": float(np.mean([m.l1_inv for m in dm])),
        "sc_inv": float(np.mean([m.sc_inv for m in dm])),
        "log_rms": float(np.mean([m.log_rms for m in dm])),
    }
    a = state.anchor
    rot, trans = [], []
    for j in range(state.n_frames):
        if j == a:
            continue
        pm = pose_metrics(relative(state.poses[a], state.poses[j]), relative(gt.poses[a], gt.poses[j]))
        rot.append(pm.rot_deg)
        trans.append(pm.trans_deg)
    out["rot_deg"] = float(np.mean(rot))
    out["trans_deg"] = float(np.mean(trans))
    return out


def _log_line(entry: dict) -> str:
    parts = [f"iter {entry['iteration']:3d}"]
    parts += [f"{k}={v:.6g}" for k, v in entry.items() if k != "iteration"]
    return "  ".join(parts)


def refine(
    state: SceneState,
    config: RefineConfig,
    gt: GroundTruth | None = None,
    log: IO[str] | None = None,
) -> SceneState:
    """Run ``config.iterations`` rounds, each starting from the previous output.

    With ``gt`` the metrics before the first and after every iteration are
    appended to ``history`` and, when ``log`` is given, written one line per
    iteration.
    """
    if config.iterations == 0:
        return state
    d_min = resolve_d_min(state, config)
    history = list(state.history)

    def record(s):
        if gt is None:
            return
        entry = {"iteration": s.iteration, **scene_metrics(s, gt)}
        history.append(entry)
        if log is not None:
            print(_log_line(entry), file=log, flush=True)

    if not history:
        record(state)
    cur = state
    for _ in range(config.iterations):
        cur = refine_once(cur, config, d_min=d_min)
        record(cur)
        if gt is None and log is not None:
            print(f"iter {cur.iteration:3d}  done", file=log, flush=True)
    return replace(cur, history=history)


__all__ = [
    "GroundTruth",
    "RefineConfig",
    "SceneState",
    "normalize_scale",
    "refine",
    "refine_once",
    "resolve_d_min",
    "scene_metrics",
    "to_feature_grid",
]
