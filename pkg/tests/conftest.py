import numpy as np
import pytest
from hypothesis import settings

from sweepsfm.geometry import Pose
from sweepsfm.synth import (
    Plane,
    SceneSpec,
    Sphere,
    SyntheticScene,
    default_intrinsics,
    look_at_pose,
    make_scene,
    random_scene,
    render,
    render_depth,
)

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")


def two_view_spec(seed: int = 5) -> SceneSpec:
    """Slanted textured plane with a sphere in front of it."""
    return SceneSpec(
        primitives=(
            Plane((0.0, 0.0, 2.6), (0.35, 0.15, -1.0), 0.0, 1),
            Sphere((-0.45, 0.25, 1.7), 0.35, 3),
        ),
        background=4.0,
        seed=seed,
    )


@pytest.fixture(scope="session")
def small_scene():
    """Three 128x96 views (32x24 feature grid) of a random scene."""
    return make_scene(random_scene(3), 3, K=default_intrinsics(128, 96), seed=3)


@pytest.fixture(scope="session")
def pair_scene():
    """Two 256x192 views (64x48 feature grid) of the slanted-plane scene, 0.2 m apart."""
    K = default_intrinsics(256, 192)
    b = 0.2
    poses = [Pose.identity(), look_at_pose((b, 0.3 * b, -0.8 * b), (0.0, 0.0, 2.6))]
    spec = two_view_spec()
    images = [render(spec, K, p)[0] for p in poses]
    Kf = K.downsample(4)
    return SyntheticScene(spec, K, poses, images, [render_depth(spec, K, p) for p in poses],
                          [render_depth(spec, Kf, p) for p in poses])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
