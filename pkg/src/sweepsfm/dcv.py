"""Plane-sweep depth cost volume with photometric and geometric channels.

For every hypothesis plane ``d_l`` (fronto-parallel in the target camera) a
source view contributes its features warped onto the plane, its depth map
warped with nearest-neighbor lookup, and the depth of the plane itself as
seen from the source camera. A matching plane makes the warped features
agree with the target's and the warped source depth agree with the
transformed plane depth.

The learned 3-D filtering of the raw volume is replaced by a fixed cost:
mean absolute feature difference plus a weighted relative depth residual,
box-smoothed in ``(plane, y, x)``, then averaged over sources.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from . import kernels
from .geometry import CameraIntrinsics, Pose, relative

DEPTH_WARPS = ("nearest", "bilinear")


@dataclass(frozen=True)
class PlaneSet:
    depths: np.ndarray
    d_min: float

    @property
    def inverse(self) -> np.ndarray:
        return 1.0 / self.depths

    @property
    def inverse_spacing(self) -> float:
        return (1.0 / self.d_min) / len(self.depths)

    def __len__(self) -> int:
        return len(self.depths)


@dataclass
class DepthCostVolume:
    """Raw per-source volumes ``(2*CH + 2, L, H, W)`` and the aggregated ``(L, H, W)`` cost."""

    raw: list[np.ndarray]
    aggregated: np.ndarray | None = None


def sample_planes(d_min: float, n_planes: int) -> PlaneSet:
    """Planes uniform in inverse depth; index 0 is the farthest, ``L-1`` is ``d_min``."""
    if not d_min > 0:
        raise ValueError(f"d_min must be positive, got {d_min}")
    if n_planes < 2:
        raise ValueError(f"need at least 2 planes, got {n_planes}")
    idepth = np.arange(1, n_planes + 1) / n_planes * (1.0 / d_min)
    depths = 1.0 / idepth
    depths[-1] = d_min
    return PlaneSet(depths, float(d_min))


def _warp(K: CameraIntrinsics, rel: Pose, depth):
    return kernels.warp_grid(K.as_tuple(), rel.rotation, rel.translation, depth, K.width, K.height)


def warp_feature_bilinear(src: np.ndarray, K: CameraIntrinsics, rel: Pose, plane: float) -> np.ndarray:
    """Source features seen through plane ``plane`` of the target; zeros off-coverage."""
    u, v, _, valid = _warp(K, rel, plane)
    return kernels.sample_bilinear(src, u, v, valid)


def warp_depth_nn(src_depth: np.ndarray, K: CameraIntrinsics, rel: Pose, plane: float) -> np.ndarray:
    u, v, _, valid = _warp(K, rel, plane)
    return kernels.sample_nearest(src_depth, u, v, valid)


def warp_depth_bilinear(src_depth: np.ndarray, K: CameraIntrinsics, rel: Pose, plane: float) -> np.ndarray:
    """Bilinear alternative to :func:`warp_depth_nn`, kept for the ablation."""
    u, v, _, valid = _warp(K, rel, plane)
    return kernels.sample_depth_bilinear(src_depth, u, v, valid)


def plane_depth_in_source(plane: float, K: CameraIntrinsics, rel: Pose) -> np.ndarray:
    """Z coordinate, in the source camera, of each target pixel placed on ``plane``."""
    _, _, zs, _ = _warp(K, rel, plane)
    return zs


def _check_sources(target_feat, sources):
    if not sources:
        raise ValueError("at least one source view is required")
    h, w = target_feat.shape[:2]
    for i, (feat, depth, _) in enumerate(sources):
        if feat.shape != target_feat.shape or depth.shape != (h, w):
            raise ValueError(
                f"source {i} resolution {feat.shape[:2]} / depth {depth.shape} "
                f"does not match target {target_feat.shape[:2]}"
            )


def build_dcv(
    target_feat: np.ndarray,
    sources: Sequence[tuple[np.ndarray, np.ndarray, Pose]],
    target_pose: Pose,
    K: CameraIntrinsics,
    planes: PlaneSet,
    depth_warp: str = "nearest",
) -> list[np.ndarray]:
    """Materialize one raw volume per source.

    Channel order: target features, warped source features, warped source
    depth, plane depth in the source camera.
    """
    _check_sources(target_feat, sources)
    if depth_warp not in DEPTH_WARPS:
        raise ValueError(f"depth_warp must be one of {DEPTH_WARPS}")
    h, w, ch = target_feat.shape
    tgt = np.moveaxis(target_feat, -1, 0)
    out = []
    for feat, depth, pose in sources:
        rel = relative(target_pose, pose)
        vol = np.empty((2 * ch + 2, len(planes), h, w))
        for l, d in enumerate(planes.depths):
            u, v, zs, valid = _warp(K, rel, d)
            vol[:ch, l] = tgt
            vol[ch : 2 * ch, l] = np.moveaxis(kernels.sample_bilinear(feat, u, v, valid), -1, 0)
            if depth_warp == "nearest":
                vol[2 * ch, l] = kernels.sample_nearest(depth, u, v, valid)
            else:
                vol[2 * ch, l] = kernels.sample_depth_bilinear(depth, u, v, valid)
            vol[2 * ch + 1, l] = zs
        out.append(vol)
    return out


def raw_to_cost(raw: np.ndarray, w_geo: float = 1.0, geo_clip: float = np.inf) -> np.ndarray:
    """Unsmoothed per-source cost ``(L, H, W)`` from a raw volume.

    The relative geometric residual is truncated at ``geo_clip``.
    """
    ch = (raw.shape[0] - 2) // 2
    photo = np.abs(raw[:ch] - raw[ch : 2 * ch]).sum(axis=0) / ch
    ds, zs = raw[2 * ch], raw[2 * ch + 1]
    has = ds > 0.0
    geo = np.where(has, w_geo * np.minimum(np.abs(ds - zs) / np.where(has, zs, 1.0), geo_clip), 0.0)
    return photo + geo


def smooth_cost(cost: np.ndarray, radii: tuple[int, int, int] = (1, 2, 2)) -> np.ndarray:
    size = tuple(2 * r + 1 for r in radii)
    if all(s == 1 for s in size):
        return cost.copy()
    return uniform_filter(cost, size=size, mode="nearest")


def average_sources(costs: Sequence[np.ndarray]) -> np.ndarray:
    """Mean over sources, summed in sorted order so it is independent of source order."""
    stack = np.sort(np.stack(costs), axis=0)
    return stack.sum(axis=0) / len(costs)


def aggregate_dcv(
    raw_volumes: Sequence[np.ndarray],
    w_geo: float = 1.0,
    radii: tuple[int, int, int] = (1, 2, 2),
    geo_clip: float = np.inf,
) -> np.ndarray:
    if not raw_volumes:
        raise ValueError("no raw volumes to aggregate")
    return average_sources([smooth_cost(raw_to_cost(r, w_geo, geo_clip), radii) for r in raw_volumes])


def _active_channels(*feats: np.ndarray) -> np.ndarray:
    used = np.zeros(feats[0].shape[-1], dtype=bool)
    for f in feats:
        used |= np.any(f != 0.0, axis=(0, 1))
    return np.flatnonzero(used)


def source_cost(
    target_feat: np.ndarray,
    src_feat: np.ndarray,
    src_depth: np.ndarray,
    rel: Pose,
    K: CameraIntrinsics,
    planes: PlaneSet,
    w_geo: float = 1.0,
    depth_warp: str = "nearest",
    geo_clip: float = np.inf,
) -> np.ndarray:
    """Unsmoothed cost of one source without materializing the raw volume.

    Equals ``raw_to_cost`` of the corresponding raw volume up to rounding.
    All-zero channels (padding) are skipped; they add exactly zero.
    """
    ch = target_feat.shape[-1]
    active = _active_channels(target_feat, src_feat)
    return kernels.dcv_cost(
        target_feat[:, :, active],
        src_feat[:, :, active],
        src_depth,
        K.as_tuple(),
        rel.rotation,
        rel.translation,
        planes.depths,
        w_geo,
        geo_clip,
        ch,
        depth_warp == "bilinear",
    )


def edge_aware_smooth(cost: np.ndarray, target_feat: np.ndarray, sigma: float = 0.5) -> np.ndarray:
    """One pass of 3x3 smoothing per plane, weighted by target-feature similarity."""
    h, w = cost.shape[1:]
    pf = np.pad(target_feat, ((1, 1), (1, 1), (0, 0)), mode="edge")
    pc = np.pad(cost, ((0, 0), (1, 1), (1, 1)), mode="edge")
    num = np.zeros_like(cost)
    den = np.zeros((h, w))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            nf = pf[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            wt = np.exp(-np.abs(nf - target_feat).mean(axis=-1) / sigma)
            num += wt * pc[:, 1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            den += wt
    return num / den


def depth_cost_volume(
    target_feat: np.ndarray,
    sources: Sequence[tuple[np.ndarray, np.ndarray, Pose]],
    target_pose: Pose,
    K: CameraIntrinsics,
    planes: PlaneSet,
    w_geo: float = 1.0,
    radii: tuple[int, int, int] = (1, 2, 2),
    depth_warp: str = "nearest",
    edge_aware: bool = False,
    geo_clip: float = np.inf,
) -> np.ndarray:
    """Aggregated ``(L, H, W)`` cost, computed source by source through the fused kernel."""
    _check_sources(target_feat, sources)
    if depth_warp not in DEPTH_WARPS:
        raise ValueError(f"depth_warp must be one of {DEPTH_WARPS}")
    costs = [
        smooth_cost(
            source_cost(
                target_feat, feat, depth, relative(target_pose, pose), K, planes, w_geo, depth_warp, geo_clip
            ),
            radii,
        )
        for feat, depth, pose in sources
    ]
    cost = average_sources(costs)
    if edge_aware:
        cost = edge_aware_smooth(cost, target_feat)
    return cost


def softmax_weights(cost: np.ndarray, beta: float, axis: int = 0) -> np.ndarray:
    z = -beta * cost
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def regress_depth(cost: np.ndarray, planes: PlaneSet, beta: float = 10.0) -> np.ndarray:
    """Soft-argmax depth: expectation of plane depths under ``softmax(-beta * cost)``."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    wts = softmax_weights(cost, beta, axis=0)
    d = np.tensordot(planes.depths, wts, axes=(0, 0))
    return np.clip(d, planes.depths.min(), planes.depths.max())


def dump_volume(path: str | Path, cost: np.ndarray) -> None:
    """Write an ``(L, H, W)`` cost as ``DCV L W H\\n`` followed by little-endian float32."""
    L, h, w = cost.shape
    with open(path, "wb") as f:
        f.write(f"DCV {L} {w} {h}\n".encode("ascii"))
        f.write(np.ascontiguousarray(cost, dtype="<f4").tobytes())


def load_volume(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "DCV":
            raise ValueError(f"{path}: not a DCV dump (header {header!r})")
        L, w, h = (int(x) for x in header[1:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != L * w * h:
        raise ValueError(f"{path}: expected {L * w * h} floats, found {data.size}")
    return data.reshape(L, h, w).astype(np.float64)
