import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import binary_erosion

from sweepsfm import synth
from sweepsfm.evaluation import pose_metrics
from sweepsfm.features import gradient_magnitude
from sweepsfm.geometry import Pose, matrix_to_euler, pixel_grid, relative, unproject, warp_coord
from sweepsfm.kernels import sample_bilinear

K = synth.default_intrinsics(64, 48)
WALL = synth.SceneSpec(primitives=(synth.Plane((0.0, 0.0, 2.0), (0.0, 0.0, -1.0), 0.0, 1),), background=9.0)


def test_fronto_parallel_plane_constant_depth():
    assert np.all(synth.render_depth(WALL, K, Pose.identity()) == 2.0)


def test_camera_moved_toward_plane():
    # camera center (0, 0, 0.5): world-to-camera translation is -0.5 in z
    d = synth.render_depth(WALL, K, Pose([1, 0, 0, 0], [0.0, 0.0, -0.5]))
    assert np.allclose(d, 1.5, rtol=0, atol=1e-12)


def test_background_catches_every_ray():
    spec = synth.SceneSpec(primitives=(), background=5.0)
    assert np.allclose(synth.render_depth(spec, K, Pose.from_euler((0.1, 0.2, 0.0))).min(), 5.0, rtol=0.2)
    with pytest.raises(ValueError):
        synth.SceneSpec(background=0.0)


def test_render_shapes_and_range():
    img, depth = synth.render(synth.random_scene(0), K, Pose.identity())
    assert img.shape == (48, 64, 3) and depth.shape == (48, 64)
    assert img.min() >= 0 and img.max() <= 1
    assert np.all(np.isfinite(depth)) and depth.min() > 0


def test_render_is_deterministic():
    spec = synth.random_scene(4)
    a = synth.render(spec, K, Pose.from_euler((0.01, 0.02, 0.0), (0.1, 0, 0)))
    b = synth.render(synth.random_scene(4), K, Pose.from_euler((0.01, 0.02, 0.0), (0.1, 0, 0)))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_projective_consistency(seed):
    sc = synth.make_scene(synth.random_scene(seed), 2, K=K, seed=seed)
    d0 = sc.depths[0]
    rel = relative(sc.poses[0], sc.poses[1])
    u, v = pixel_grid(64, 48)
    X = rel.transform(unproject(K, u, v, d0))
    pc = warp_coord(u, v, d0, K, rel)
    seen = synth.render_depth_at(sc.spec, K, sc.poses[1], np.where(pc.valid, pc.u, 0), np.where(pc.valid, pc.v, 0))
    z = X[..., 2]
    # nothing is visible behind the transformed point; unoccluded points match it
    assert np.all(seen[pc.valid] <= z[pc.valid] + 1e-6)
    match = np.abs(seen - z) < 1e-6
    assert match[pc.valid].mean() > 0.9


def test_warp_reprojection_of_checkered_plane():
    spec = synth.SceneSpec(primitives=(synth.Plane((0.0, 0.0, 2.5), (0.2, 0.1, -1.0), 0.0, 1),), background=9.0)
    Kr = synth.default_intrinsics(256, 192)
    poses = [Pose.identity(), synth.look_at_pose((0.2, 0.05, -0.05), (0.0, 0.0, 2.5))]
    (img0, d0), (img1, _) = (synth.render(spec, Kr, p) for p in poses)
    u, v = pixel_grid(256, 192)
    pc = warp_coord(u, v, d0, Kr, relative(poses[0], poses[1]))
    warped = sample_bilinear(img1, pc.u, pc.v, pc.valid)
    m = pc.valid.copy()
    m[:2], m[-2:], m[:, :2], m[:, -2:] = False, False, False, False
    err = np.abs(warped - img0)[m].mean()
    assert m.mean() > 0.8
    assert err < 0.02 * (img0.max() - img0.min())


def test_textureless_patch_is_flat():
    spec = synth.random_scene(2, textureless=True)
    ids = synth.render_texture_ids(spec, synth.default_intrinsics(128, 96), Pose.identity())
    img, _ = synth.render(spec, synth.default_intrinsics(128, 96), Pose.identity())
    flat = ids == 0
    assert 0.1 < flat.mean() < 0.4
    g = gradient_magnitude(img)
    core = binary_erosion(flat.reshape(24, 4, 32, 4).all(axis=(1, 3)), iterations=2)
    assert core.any() and np.max(g[core]) < 1e-9


# perturbation


def test_perturb_zero_noise_is_identity():
    p = Pose.from_euler((0.1, 0.2, 0.3), (1, 2, 3))
    d = np.random.default_rng(0).uniform(1, 3, (4, 5))
    q, e = synth.perturb(p, d, 0.0, 0.0, 0.0, seed=3)
    assert np.array_equal(q.quat, p.quat) and np.array_equal(q.translation, p.translation)
    assert np.array_equal(e, d)


def test_perturb_is_seeded():
    p = Pose.from_euler((0.1, 0.2, 0.3), (1, 2, 3))
    d = np.ones((4, 5))
    a = synth.perturb(p, d, 0.05, 0.1, 0.2, seed=11)
    b = synth.perturb(p, d, 0.05, 0.1, 0.2, seed=11)
    c = synth.perturb(p, d, 0.05, 0.1, 0.2, seed=12)
    assert np.array_equal(a[0].quat, b[0].quat) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_perturb_single_axis_rotation_angle():
    p = Pose.from_euler((0.1, 0.2, 0.3), (1, 2, 3))
    q, _ = synth.perturb(p, np.ones((2, 2)), rot_noise=(0.05, 0.0, 0.0), seed=0)
    assert pose_metrics(q, p).rot_deg == pytest.approx(math.degrees(0.05), abs=1e-9)
    assert pose_metrics(q, p).rot_deg == pytest.approx(2.8648, abs=1e-4)


@settings(max_examples=40)
@given(st.floats(0, 0.3), st.floats(0, 1.0), st.integers(0, 1000))
def test_scalar_noise_has_given_norm(rot, trans, seed):
    p = Pose.from_euler((0.0, 0.1, 0.0), (0.5, 0.0, 0.0))
    q, _ = synth.perturb(p, np.ones((2, 2)), rot, trans, seed=seed)
    # scalar noise fixes the norm of the Euler delta, not the geodesic angle
    e = matrix_to_euler(p.rotation.T @ q.rotation)
    assert np.linalg.norm(e) == pytest.approx(rot, abs=1e-9)
    assert np.linalg.norm(q.translation - p.translation) == pytest.approx(trans, abs=1e-12)


def test_depth_noise_keeps_invalid_pixels():
    d = np.array([[0.0, 2.0], [3.0, 0.0]])
    _, e = synth.perturb(Pose.identity(), d, depth_noise=0.3, seed=1)
    assert e[0, 0] == 0 and e[1, 1] == 0 and np.all(e[d > 0] > 0)


# scene files


def test_scene_text_roundtrip():
    spec = synth.random_scene(9, textureless=True)
    again = synth.parse_scene(synth.format_scene(spec))
    assert again == spec


def test_scene_parse_errors():
    with pytest.raises(ValueError, match="unknown key"):
        synth.parse_scene("colour = 3\n")
    with pytest.raises(ValueError, match="missing attribute"):
        synth.parse_scene("sphere = center=0,0,2\n")
    with pytest.raises(ValueError, match="key = value"):
        synth.parse_scene("plane\n")


def test_make_scene_geometry():
    sc = synth.make_scene(synth.random_scene(1), 3, K=K, baseline=0.3, seed=2)
    assert sc.poses[0].allclose(Pose.identity(), 0)
    for p in sc.poses[1:]:
        c = -p.rotation.T @ p.translation
        assert np.linalg.norm(c[:2]) <= 0.3 + 1e-12
    assert sc.feature_depths[0].shape == (12, 16)
