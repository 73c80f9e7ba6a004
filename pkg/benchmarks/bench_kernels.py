"""Time the depth and pose cost kernels on both backends.

Usage: python3 benchmarks/bench_kernels.py [--width 128 --height 96 --planes 64 --poses 125]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sweepsfm.features import extract_features
from sweepsfm.geometry import relative
from sweepsfm.kernels import get_backend
from sweepsfm.pcv import sample_poses
from sweepsfm.synth import default_intrinsics, make_scene, random_scene


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=int, default=128, help="feature-grid width")
    ap.add_argument("--height", type=int, default=96, help="feature-grid height")
    ap.add_argument("--planes", type=int, default=64)
    ap.add_argument("--grid", type=int, default=5, help="pose samples per axis")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    K = default_intrinsics(4 * args.width, 4 * args.height)
    scene = make_scene(random_scene(0), 2, K=K, seed=0)
    Kf = K.downsample(4)
    tgt, src = (extract_features(im) for im in scene.images)
    rel = relative(scene.poses[0], scene.poses[1])
    planes = 1.0 / np.linspace(1.0 / 8.0, 1.0, args.planes)
    cands = sample_poses(rel, n_per_axis=args.grid, n_trans_per_axis=args.grid)
    Rs, ts = cands.rotations, cands.translations
    n_total = tgt.shape[2]
    d0, d1 = scene.feature_depths

    rows = []
    results = {}
    for name in ("numpy", "numba"):
        be = get_backend(name)

        def dcv():
            return be.dcv_cost(tgt, src, d1, Kf.as_tuple(), rel.rotation, rel.translation, planes, 1.0, 0.1, n_total, False)

        def pcv():
            return be.pcv_scores(tgt, d0, src, d1, Kf.as_tuple(), Rs, ts, 1.0, 0.1, n_total, False)

        # first call compiles (numba) or warms caches (numpy)
        results[name] = (dcv(), pcv())
        rows.append((name, best_of(dcv, args.repeats), best_of(pcv, args.repeats)))

    print(f"feature grid {args.width}x{args.height}, {args.planes} planes, {len(cands)} pose candidates")
    print(f"{'backend':<8}{'dcv [s]':>10}{'pcv [s]':>10}")
    for name, a, b in rows:
        print(f"{name:<8}{a:>10.4f}{b:>10.4f}")
    print(f"speedup  {rows[0][1] / rows[1][1]:>9.1f}x{rows[0][2] / rows[1][2]:>9.1f}x")
    dmax = np.nanmax(np.abs(results["numpy"][0] - results["numba"][0]))
    pmax = np.nanmax(np.abs(results["numpy"][1] - results["numba"][1]))
    print(f"max |numpy - numba|: dcv {dmax:.2e}, pcv {pmax:.2e}")


if __name__ == "__main__":
    main()
