"""Bundle directories: the inputs of a refinement run and its outputs.

Layout::

    intrinsics.txt        fx fy cx cy   (for the full-resolution images)
    poses.txt             initial poses, one line per frame
    images/<name>.png     frames, sorted by file name
    depths/<name>.pfm     initial depth per frame (.pfm or 16-bit .png),
                          at image or feature (1/4) resolution
    gt_poses.txt          optional ground truth
    gt_depths/<name>.pfm  optional ground truth

Results written by :func:`save_results` use the same names: ``poses.txt``,
``depths/<name>.pfm`` (feature resolution), plus ``points.ply`` and, when
ground truth is known, ``metrics.txt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .evaluation import depth_metrics, format_keyvalue, format_table, pose_metrics
from .features import STRIDE
from .formats import FormatError
from .geometry import CameraIntrinsics, Pose, relative
from .refiner import GroundTruth, SceneState, to_feature_grid

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
DEPTH_SUFFIXES = (".pfm", ".png")
ACCURACY_KEYS = ("delta1", "delta2", "delta3")


@dataclass
class Bundle:
    root: Path
    names: list[str]
    image_paths: list[Path]
    K: CameraIntrinsics
    poses: list[Pose]
    depth_paths: list[Path]
    gt_poses: list[Pose] | None = None
    gt_depth_paths: list[Path] | None = None

    def __len__(self) -> int:
        return len(self.names)

    def images(self) -> list[np.ndarray]:
        return [formats.read_image(p) for p in self.image_paths]

    def depths(self) -> list[np.ndarray]:
        return [formats.read_depth(p) for p in self.depth_paths]

    def has_gt(self) -> bool:
        return self.gt_poses is not None and self.gt_depth_paths is not None

    def ground_truth(self) -> GroundTruth:
        if not self.has_gt():
            raise FormatError(f"{self.root}: bundle has no gt_poses.txt / gt_depths/")
        Kf = self.K.downsample(STRIDE)
        return GroundTruth([to_feature_grid(formats.read_depth(p), Kf) for p in self.gt_depth_paths], self.gt_poses)

    def state(self) -> SceneState:
        return SceneState.from_images(self.images(), self.K, self.poses, self.depths())


def _depth_files(folder: Path, names: list[str]) -> list[Path]:
    out = []
    for name in names:
        found = [folder / f"{name}{s}" for s in DEPTH_SUFFIXES if (folder / f"{name}{s}").is_file()]
        if not found:
            raise FormatError(f"{folder}: no depth map for frame {name!r} (expected {name}.pfm or {name}.png)")
        out.append(found[0])
    extra = sorted(
        p.name for p in folder.iterdir() if p.suffix.lower() in DEPTH_SUFFIXES and p.stem not in set(names)
    )
    if extra:
        raise FormatError(f"{folder}: depth maps without a matching image: {', '.join(extra)}")
    return out


def load_bundle(root: str | Path) -> Bundle:
    root = Path(root)
    if not root.is_dir():
        raise FormatError(f"{root}: bundle directory does not exist")
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise FormatError(f"{root}: missing images/ directory")
    image_paths = sorted(p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if len(image_paths) < 2:
        raise FormatError(f"{img_dir}: need at least two images, found {len(image_paths)}")
    names = [p.stem for p in image_paths]

    sizes = {formats.read_image(p).shape[:2] for p in image_paths}
    if len(sizes) != 1:
        raise FormatError(f"{img_dir}: images differ in size: {sorted(sizes)}")
    (h, w), = sizes
    for name in ("intrinsics.txt", "poses.txt"):
        if not (root / name).is_file():
            raise FormatError(f"{root}: missing {name}")
    K = formats.read_intrinsics(root / "intrinsics.txt", w, h)
    if w % STRIDE or h % STRIDE:
        raise FormatError(f"{img_dir}: image size {w}x{h} must be divisible by {STRIDE}")

    poses = formats.read_poses(root / "poses.txt")
    if len(poses) != len(names):
        raise FormatError(f"{root / 'poses.txt'}: {len(poses)} poses for {len(names)} images")
    if not (root / "depths").is_dir():
        raise FormatError(f"{root}: missing depths/ directory")
    depth_paths = _depth_files(root / "depths", names)

    gt_poses = gt_depths = None
    if (root / "gt_poses.txt").is_file():
        gt_poses = formats.read_poses(root / "gt_poses.txt")
        if len(gt_poses) != len(names):
            raise FormatError(f"{root / 'gt_poses.txt'}: {len(gt_poses)} poses for {len(names)} images")
    if (root / "gt_depths").is_dir():
        gt_depths = _depth_files(root / "gt_depths", names)
    return Bundle(root, names, image_paths, K, poses, depth_paths, gt_poses, gt_depths)


def write_bundle(
    root: str | Path,
    images,
    K: CameraIntrinsics,
    poses,
    depths,
    gt_poses=None,
    gt_depths=None,
    names=None,
) -> Path:
    """Write a bundle; depth maps go out as PFM."""
    root = Path(root)
    n = len(images)
    if not (len(poses) == len(depths) == n):
        raise ValueError("images, poses and depths must have equal lengths")
    names = names or [f"{i:03d}" for i in range(n)]
    for sub in ("images", "depths"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    formats.write_intrinsics(root / "intrinsics.txt", K)
    formats.write_poses(root / "poses.txt", poses)
    for name, img, d in zip(names, images, depths):
        formats.write_image(root / "images" / f"{name}.png", img)
        formats.write_pfm(root / "depths" / f"{name}.pfm", d)
    if gt_poses is not None:
        formats.write_poses(root / "gt_poses.txt", gt_poses)
    if gt_depths is not None:
        (root / "gt_depths").mkdir(exist_ok=True)
        for name, d in zip(names, gt_depths):
            formats.write_pfm(root / "gt_depths" / f"{name}.pfm", d)
    return root


def point_cloud(state: SceneState, frames=None) -> tuple[np.ndarray, np.ndarray]:
    frames = range(state.n_frames) if frames is None else frames
    Kf = state.feature_K
    pts, cols = [], []
    for i in frames:
        p, c = formats.depth_to_points(state.depths[i], Kf, state.poses[i], state.images[i])
        pts.append(p)
        cols.append(c)
    return np.concatenate(pts), np.concatenate(cols)


def metrics_report(state: SceneState, gt: GroundTruth, names=None) -> tuple[str, dict[str, float]]:
    """Per-frame error table plus a flat dict of means for key=value output.

    The table holds error metrics only, so a perfect prediction prints all
    zeros; the delta accuracies appear in the returned means.
    """
    names = names or [f"{i:03d}" for i in range(state.n_frames)]
    a = state.anchor
    rows: dict[str, dict[str, float]] = {}
    full: list[dict[str, float]] = []
    for i, name in enumerate(names):
        row = depth_metrics(state.depths[i], gt.depths[i]).as_dict()
        if i == a:
            row.update(rot_deg=0.0, trans_deg=0.0)
        else:
            pm = pose_metrics(relative(state.poses[a], state.poses[i]), relative(gt.poses[a], gt.poses[i]))
            row.update(pm.as_dict())
        full.append(row)
        rows[name] = {k: v for k, v in row.items() if k not in ACCURACY_KEYS}
    mean = {k: float(np.mean([r[k] for r in full])) for k in full[0]}
    for k in ("rot_deg", "trans_deg"):
        mean[k] = float(np.mean([r[k] for i, r in enumerate(full) if i != a]))
    rows["mean"] = {k: mean[k] for k in rows[names[0]]}
    return format_table(rows), mean


def save_results(state: SceneState, out: str | Path, names=None, gt: GroundTruth | None = None) -> Path:
    out = Path(out)
    names = names or [f"{i:03d}" for i in range(state.n_frames)]
    (out / "depths").mkdir(parents=True, exist_ok=True)
    formats.write_poses(out / "poses.txt", state.poses)
    for name, d in zip(names, state.depths):
        formats.write_pfm(out / "depths" / f"{name}.pfm", d)
    formats.write_ply(out / "points.ply", *point_cloud(state))
    if gt is not None:
        table, mean = metrics_report(state, gt, names)
        (out / "metrics.txt").write_text(table + "\n\n" + format_keyvalue(mean) + "\n")
    return out
