"""Command-line entry points: ``synth``, ``refine``, ``eval`` and ``render-ply``."""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, bundle, dcv, formats, synth
from .evaluation import format_keyvalue
from .formats import FormatError
from .geometry import relative
from .refiner import RefineConfig, refine, resolve_d_min, to_feature_grid

ROT_BIN = 0.035
TRANS_BIN_SCALE = 0.10


class CLIError(Exception):
    pass


# synth


def cmd_synth(args) -> None:
    if args.width % 4 or args.height % 4:
        raise CLIError(f"--width/--height must be multiples of 4, got {args.width}x{args.height}")
    if args.frames < 2:
        raise CLIError("--frames must be at least 2")
    if min(args.rot_noise, args.trans_noise, args.depth_noise) < 0:
        raise CLIError("noise levels must be >= 0")
    try:
        spec = synth.load_scene(args.scene) if args.scene else synth.random_scene(args.seed, args.textureless)
    except ValueError as e:
        raise CLIError(f"{args.scene}: {e}") from None
    K = synth.default_intrinsics(args.width, args.height)
    scene = synth.make_scene(spec, args.frames, K=K, baseline=args.baseline, seed=args.seed)

    poses, depths = [], []
    for i, (p, d) in enumerate(zip(scene.poses, scene.feature_depths)):
        if i == 0:
            # the anchor keeps its exact pose; only its depth is perturbed
            _, nd = synth.perturb(p, d, depth_noise=args.depth_noise, seed=args.seed + 1000 + i)
            poses.append(p)
        else:
            baseline = float(np.linalg.norm(relative(scene.poses[0], p).translation))
            p, nd = synth.perturb(
                p,
                d,
                rot_noise=args.rot_noise * ROT_BIN,
                trans_noise=args.trans_noise * TRANS_BIN_SCALE * baseline,
                depth_noise=args.depth_noise,
                seed=args.seed + 1000 + i,
            )
            poses.append(p)
        depths.append(nd)
    out = Path(args.out)
    bundle.write_bundle(out, scene.images, K, poses, depths, gt_poses=scene.poses, gt_depths=scene.feature_depths)
    (out / "scene.txt").write_text(synth.format_scene(spec))
    print(f"wrote {args.frames}-frame bundle to {out}")


# refine


def _config(args) -> RefineConfig:
    return RefineConfig(
        iterations=args.iterations,
        planes=args.planes,
        d_min=args.d_min,
        beta_depth=args.beta_depth,
        beta_pose=args.beta_pose,
        rot_bin=args.pose_rot_bin,
        trans_bin_scale=args.pose_trans_bin,
        rot_grid=args.pose_grid,
        trans_grid=args.pose_grid,
        w_geo=args.w_geo,
        depth_warp=args.depth_warp,
        workers=args.workers,
    )


def _write_run_info(path: Path, config: RefineConfig, args) -> None:
    # no timestamps or paths: identical flags must give identical files
    lines = [f"{k}={v!r}" for k, v in vars(config).items()]
    lines.append(f"seed={args.seed!r}")
    path.write_text("\n".join(lines) + "\n")


def _copy_inputs(b: bundle.Bundle, out: Path) -> None:
    (out / "depths").mkdir(parents=True, exist_ok=True)
    shutil.copyfile(b.root / "poses.txt", out / "poses.txt")
    for p in b.depth_paths:
        shutil.copyfile(p, out / "depths" / p.name)


def cmd_refine(args) -> None:
    try:
        config = _config(args)
    except ValueError as e:
        raise CLIError(str(e)) from None
    if args.planes < 2:
        raise CLIError("--planes must be at least 2")
    if args.pose_grid < 1:
        raise CLIError("--pose-grid must be at least 1")
    b = bundle.load_bundle(args.bundle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = b.state()
    gt = b.ground_truth() if b.has_gt() else None

    if config.iterations == 0:
        _copy_inputs(b, out)
        formats.write_ply(out / "points.ply", *bundle.point_cloud(state))
        final = state
    else:
        with open(out / "log.txt", "w") as log:
            final = refine(state, config, gt=gt, log=log)
        bundle.save_results(final, out, b.names)
    if gt is not None:
        table, mean = bundle.metrics_report(final, gt, b.names)
        (out / "metrics.txt").write_text(table + "\n\n" + format_keyvalue(mean) + "\n")
        print(table)
    _write_run_info(out / "run.txt", config, args)
    if args.dump_dcv:
        _dump_dcv(final, config, args.dump_dcv, args.dump_frame, resolve_d_min(state, config))
    print(f"wrote results to {out}")


def _dump_dcv(state, config: RefineConfig, path, frame: int, d_min: float) -> None:
    if not 0 <= frame < state.n_frames:
        raise CLIError(f"--dump-frame {frame} out of range for {state.n_frames} frames")
    planes = dcv.sample_planes(d_min, config.planes)
    sources = [(state.features[j], state.depths[j], state.poses[j]) for j in range(state.n_frames) if j != frame]
    cost = dcv.depth_cost_volume(
        state.features[frame],
        sources,
        state.poses[frame],
        state.feature_K,
        planes,
        w_geo=config.w_geo,
        radii=config.smooth_radii,
        depth_warp=config.depth_warp,
        edge_aware=config.edge_aware,
        geo_clip=config.geo_clip,
    )
    dcv.dump_volume(path, cost)


# eval


def _prediction(b: bundle.Bundle, result: Path | None):
    """Predicted poses and feature-grid depths: a result directory or the bundle's initialization."""
    Kf = b.K.downsample(4)
    if result is None:
        return b.poses, [to_feature_grid(d, Kf) for d in b.depths()]
    if not result.is_dir():
        raise FormatError(f"{result}: result directory does not exist")
    if not (result / "poses.txt").is_file():
        raise FormatError(f"{result}: missing poses.txt")
    poses = formats.read_poses(result / "poses.txt")
    if len(poses) != len(b):
        raise FormatError(f"{result / 'poses.txt'}: {len(poses)} poses for {len(b)} frames")
    if not (result / "depths").is_dir():
        raise FormatError(f"{result}: missing depths/ directory")
    paths = bundle._depth_files(result / "depths", b.names)
    return poses, [to_feature_grid(formats.read_depth(p), Kf) for p in paths]


def cmd_eval(args) -> None:
    b = bundle.load_bundle(args.bundle)
    if not b.has_gt():
        raise CLIError(f"{b.root}: eval needs gt_poses.txt and gt_depths/")
    poses, depths = _prediction(b, Path(args.result) if args.result else None)
    gt = b.ground_truth()
    # metrics need no features; a light stand-in state avoids extracting them
    state = bundle.SceneState(b.K, [None] * len(b), [None] * len(b), depths, poses)
    table, mean = bundle.metrics_report(state, gt, b.names)
    print(table)
    print()
    print(format_keyvalue(mean))


# render-ply


def cmd_render_ply(args) -> None:
    b = bundle.load_bundle(args.bundle)
    result = Path(args.result) if args.result else None
    if result is None:
        poses, depths = b.poses, b.depths()
    else:
        poses, depths = _prediction(b, result)
    frames = range(len(b)) if args.frames is None else args.frames
    images = b.images()
    pts, cols = [], []
    for i in frames:
        if not 0 <= i < len(b):
            raise CLIError(f"--frames: index {i} out of range for {len(b)} frames")
        d = depths[i]
        K = b.K if d.shape == (b.K.height, b.K.width) else b.K.downsample(4)
        p, c = formats.depth_to_points(d, K, poses[i], images[i])
        pts.append(p)
        cols.append(c)
    formats.write_ply(args.out, np.concatenate(pts), np.concatenate(cols))
    print(f"wrote {sum(len(p) for p in pts)} points to {args.out}")


# parser


def _frames(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated frame indices, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sweepsfm", description="Joint depth and pose refinement with cost volumes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    d = RefineConfig()
    p = sub.add_parser("refine", help="refine depths and poses of a bundle")
    p.add_argument("--bundle", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--iterations", type=int, default=d.iterations, metavar="N")
    p.add_argument("--planes", type=int, default=d.planes, metavar="L")
    p.add_argument("--d-min", type=float, default=None, help="nearest plane depth; default derives it from the input depths")
    p.add_argument("--pose-rot-bin", type=float, default=d.rot_bin, metavar="RAD")
    p.add_argument("--pose-trans-bin", type=float, default=d.trans_bin_scale, metavar="FRACTION",
                   help="translation bin as a fraction of the baseline length")
    p.add_argument("--pose-grid", type=int, default=d.rot_grid, metavar="N", help="samples per pose axis")
    p.add_argument("--beta-depth", type=float, default=d.beta_depth)
    p.add_argument("--beta-pose", type=float, default=d.beta_pose)
    p.add_argument("--w-geo", type=float, default=d.w_geo, help="weight of the geometric-consistency term")
    p.add_argument("--depth-warp", choices=("nearest", "bilinear"), default=d.depth_warp)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="recorded in run.txt; refinement itself is deterministic")
    p.add_argument("--dump-dcv", metavar="FILE", help="write the final aggregated depth cost volume of one frame")
    p.add_argument("--dump-frame", type=int, default=0, metavar="I")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("synth", help="render a synthetic bundle with ground truth and a perturbed initialization")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=384)
    p.add_argument("--baseline", type=float, default=0.2, metavar="M")
    p.add_argument("--rot-noise", type=float, default=0.1, metavar="BINS", help=f"rotation noise in bins of {ROT_BIN} rad")
    p.add_argument("--trans-noise", type=float, default=0.5, metavar="BINS",
                   help=f"translation noise in bins of {TRANS_BIN_SCALE} x baseline")
    p.add_argument("--depth-noise", type=float, default=0.25, metavar="REL", help="relative depth noise (std)")
    p.add_argument("--textureless", action="store_true", help="add a flat untextured patch")
    p.add_argument("--scene", metavar="FILE", help="scene description (key=value format) instead of a random scene")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="print error metrics against ground truth")
    p.add_argument("--bundle", required=True, metavar="DIR")
    p.add_argument("--result", metavar="DIR", help="refine output; default evaluates the bundle's initialization")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render-ply", help="unproject depth maps to a colored point cloud")
    p.add_argument("--bundle", required=True, metavar="DIR")
    p.add_argument("--result", metavar="DIR", help="take depths and poses from a refine output")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--frames", type=_frames, default=None, metavar="I,J,...")
    p.set_defaults(func=cmd_render_ply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        args.func(args)
    except (CLIError, FormatError, FileNotFoundError, NotADirectoryError) as e:
        sub.print_usage(sys.stderr)
        print(f"{sub.prog}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
