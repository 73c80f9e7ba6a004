"""Ray-cast renderer of textured planes and spheres with exact depth.

Shading is Lambertian under a fixed directional light, so a surface point
has the same color in every view and photo-consistency holds exactly up
to sampling.

Scene files are plain ``key = value`` text::

    # comment
    seed = 3
    light = 0.3, -0.6, 1.0
    ambient = 0.35
    checker = 0.25
    noise_scale = 0.08
    background = 7.0
    plane = center=0,0,3 normal=0.2,0,-1 extent=1.5 texture=1
    sphere = center=0.4,0.2,2.0 radius=0.35 texture=2

``background`` is an infinite world plane ``z = background`` (texture 1).
``extent`` is the half side of a square plane patch, ``0`` for unbounded.
Texture ``0`` is flat (textureless); any other id selects a checker +
value-noise pattern with its own tint and phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, Pose, euler_to_matrix

FLAT_ALBEDO = 0.55


@dataclass(frozen=True)
class Plane:
    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    extent: float = 0.0
    texture: int = 1


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    texture: int = 1


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple = ()
    background: float = 8.0
    light: tuple[float, float, float] = (0.3, -0.6, 1.0)
    ambient: float = 0.35
    checker: float = 0.25
    noise_scale: float = 0.08
    seed: int = 0
    _noise: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.background > 0:
            raise ValueError("background depth must be positive and finite")
        rng = np.random.default_rng(self.seed)
        object.__setattr__(self, "_noise", rng.random((4, 128, 128)))


def _vec(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(","))


def parse_scene(text: str) -> SceneSpec:
    kw: dict = {}
    prims = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in ("plane", "sphere"):
            attrs = dict(tok.split("=", 1) for tok in value.split())
            try:
                if key == "plane":
                    prims.append(
                        Plane(
                            _vec(attrs["center"]),
                            _vec(attrs["normal"]),
                            float(attrs.get("extent", 0.0)),
                            int(attrs.get("texture", 1)),
                        )
                    )
                else:
                    prims.append(
                        Sphere(_vec(attrs["center"]), float(attrs["radius"]), int(attrs.get("texture", 1)))
                    )
            except KeyError as e:
                raise ValueError(f"line {lineno}: {key} is missing attribute {e}") from None
        elif key in ("light",):
            kw[key] = _vec(value)
        elif key == "seed":
            kw[key] = int(value)
        elif key in ("background", "ambient", "checker", "noise_scale"):
            kw[key] = float(value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return SceneSpec(primitives=tuple(prims), **kw)


def format_scene(spec: SceneSpec) -> str:
    def v(t):
        return ",".join(repr(float(x)) for x in t)

    lines = [
        f"seed = {spec.seed}",
        f"light = {v(spec.light)}",
        f"ambient = {spec.ambient!r}",
        f"checker = {spec.checker!r}",
        f"noise_scale = {spec.noise_scale!r}",
        f"background = {spec.background!r}",
    ]
    for p in spec.primitives:
        if isinstance(p, Plane):
            lines.append(
                f"plane = center={v(p.center)} normal={v(p.normal)} extent={p.extent!r} texture={p.texture}"
            )
        else:
            lines.append(f"sphere = center={v(p.center)} radius={p.radius!r} texture={p.texture}")
    return "\n".join(lines) + "\n"


def load_scene(path: str | Path) -> SceneSpec:
    return parse_scene(Path(path).read_text())


def _plane_axes(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    up = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(up, n)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _value_noise(table: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    n = table.shape[0]
    i0 = np.floor(s).astype(np.int64)
    j0 = np.floor(t).astype(np.int64)
    fs = s - i0
    ft = t - j0
    fs = fs * fs * (3 - 2 * fs)
    ft = ft * ft * (3 - 2 * ft)
    i0 %= n
    j0 %= n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    a = table[i0, j0] * (1 - fs) + table[i1, j0] * fs
    b = table[i0, j1] * (1 - fs) + table[i1, j1] * fs
    return a * (1 - ft) + b * ft


def _albedo(spec: SceneSpec, tex: int, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """RGB albedo at surface coordinates ``(s, t)`` in meters."""
    if tex == 0:
        return np.full(s.shape + (3,), FLAT_ALBEDO)
    phase = 0.37 * tex
    ss, tt = s + phase, t - phase
    chk = np.where((np.floor(ss / spec.checker) + np.floor(tt / spec.checker)) % 2 == 0, 1.0, -1.0)
    noise = np.zeros_like(s)
    amp, scale, total = 1.0, spec.noise_scale, 0.0
    for octave in range(3):
        table = spec._noise[(tex + octave) % 4]
        noise += amp * (2.0 * _value_noise(table, ss / scale, tt / scale) - 1.0)
        total += amp
        amp *= 0.5
        scale *= 0.5
    noise /= total
    base = 0.5 + 0.18 * chk + 0.3 * noise
    tint = 0.85 + 0.15 * np.array([np.cos(tex), np.cos(tex + 2.1), np.cos(tex + 4.2)])
    return np.clip(base[..., None] * tint, 0.02, 0.98)


def _intersect(spec: SceneSpec, origin: np.ndarray, dirs: np.ndarray):
    """Nearest hit along ``origin + lam * dirs``; returns ``lam``, primitive index, normal, (s, t)."""
    shape = dirs.shape[:-1]
    best = np.full(shape, np.inf)
    idx = np.full(shape, -1, dtype=np.int64)
    normal = np.zeros(shape + (3,))
    st = np.zeros(shape + (2,))

    prims = list(spec.primitives) + [Plane((0.0, 0.0, spec.background), (0.0, 0.0, -1.0), 0.0, 1)]
    for k, prim in enumerate(prims):
        if isinstance(prim, Plane):
            n = np.asarray(prim.normal, float)
            n = n / np.linalg.norm(n)
            c = np.asarray(prim.center, float)
            denom = dirs @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                lam = ((c - origin) @ n) / denom
            hit = np.isfinite(lam) & (lam > 1e-9)
            e1, e2 = _plane_axes(n)
            P = origin + lam[..., None] * dirs
            s = (P - c) @ e1
            t = (P - c) @ e2
            if prim.extent > 0:
                hit &= (np.abs(s) <= prim.extent) & (np.abs(t) <= prim.extent)
            nn = np.broadcast_to(n, shape + (3,))
        else:
            c = np.asarray(prim.center, float)
            oc = origin - c
            a = np.einsum("...i,...i->...", dirs, dirs)
            b = 2.0 * dirs @ oc
            cc = oc @ oc - prim.radius**2
            disc = b * b - 4 * a * cc
            sq = np.sqrt(np.maximum(disc, 0.0))
            l1 = (-b - sq) / (2 * a)
            l2 = (-b + sq) / (2 * a)
            lam = np.where(l1 > 1e-9, l1, l2)
            hit = (disc >= 0) & (lam > 1e-9)
            P = origin + lam[..., None] * dirs
            nn = (P - c) / prim.radius
            s = prim.radius * np.arctan2(nn[..., 0], -nn[..., 2])
            t = prim.radius * np.arcsin(np.clip(nn[..., 1], -1.0, 1.0))
        closer = hit & (lam < best)
        best = np.where(closer, lam, best)
        idx = np.where(closer, k, idx)
        normal = np.where(closer[..., None], nn, normal)
        st = np.where(closer[..., None], np.stack([s, t], axis=-1), st)
    return best, idx, normal, st, prims


def _rays(K: CameraIntrinsics, pose: Pose, width: int, height: int, offsets=(0.0,)):
    v, u = np.mgrid[0:height, 0:width].astype(float)
    R = pose.rotation
    origin = -R.T @ pose.translation
    out = []
    for oy in offsets:
        for ox in offsets:
            d_cam = np.stack([(u + ox - K.cx) / K.fx, (v + oy - K.cy) / K.fy, np.ones_like(u)], axis=-1)
            out.append(d_cam @ R)  # rows of R^T d
    return origin, out


def render_depth(spec: SceneSpec, K: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """Camera-frame z of the first surface hit through every pixel center."""
    v, u = np.mgrid[0 : K.height, 0 : K.width].astype(float)
    return render_depth_at(spec, K, pose, u, v)


def render_depth_at(spec: SceneSpec, K: CameraIntrinsics, pose: Pose, u, v) -> np.ndarray:
    """Camera-frame z of the first surface hit through continuous pixel coordinates."""
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    R = pose.rotation
    origin = -R.T @ pose.translation
    d_cam = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    lam, idx, *_ = _intersect(spec, origin, d_cam @ R)
    if np.any(idx < 0):
        raise ValueError("some rays miss every primitive and the background")
    # rays have unit camera-z, so the ray parameter is the depth
    return lam


def render_texture_ids(spec: SceneSpec, K: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """Texture id of the surface seen through every pixel center (0 = flat)."""
    origin, (dirs,) = _rays(K, pose, K.width, K.height)
    _, idx, _, _, prims = _intersect(spec, origin, dirs)
    ids = np.array([p.texture for p in prims])
    return ids[idx]


def render(spec: SceneSpec, K: CameraIntrinsics, pose: Pose, supersample: int = 2):
    """Render ``(image, depth)``: float RGB ``(H, W, 3)`` in [0, 1] and depth ``(H, W)``."""
    depth = render_depth(spec, K, pose)
    ss = max(1, int(supersample))
    offsets = tuple((np.arange(ss) + 0.5) / ss - 0.5)
    origin, dir_sets = _rays(K, pose, K.width, K.height, offsets)
    light = np.asarray(spec.light, float)
    light = light / np.linalg.norm(light)
    img = np.zeros((K.height, K.width, 3))
    for dirs in dir_sets:
        lam, idx, normal, st, prims = _intersect(spec, origin, dirs)
        color = np.zeros_like(img)
        for k, prim in enumerate(prims):
            m = idx == k
            if not m.any():
                continue
            alb = _albedo(spec, prim.texture, st[m][:, 0], st[m][:, 1])
            shade = np.abs(normal[m] @ light) if isinstance(prim, Plane) else np.maximum(-(normal[m] @ light), 0.0)
            color[m] = alb * (spec.ambient + (1.0 - spec.ambient) * shade)[:, None]
        img += color
    return np.clip(img / len(dir_sets), 0.0, 1.0), depth


def perturb(
    pose: Pose,
    depth: np.ndarray,
    rot_noise=0.0,
    trans_noise=0.0,
    depth_noise: float = 0.0,
    seed: int = 0,
) -> tuple[Pose, np.ndarray]:
    """Seeded initialization error.

    ``rot_noise``/``trans_noise`` given as 3-vectors are per-axis magnitudes
    (Euler radians / meters) with random signs; given as scalars they are the
    norm of a perturbation along a random direction. Rotation deltas are
    right-multiplied. Depth gets multiplicative Gaussian noise of relative
    standard deviation ``depth_noise``; invalid pixels stay invalid.
    """
    rng = np.random.default_rng(seed)

    def delta(noise):
        noise = np.asarray(noise, dtype=float)
        if noise.ndim == 0:
            d = rng.normal(size=3)
            return float(noise) * d / np.linalg.norm(d)
        return noise * rng.choice([-1.0, 1.0], size=3)

    d_rot = delta(rot_noise)
    d_trans = delta(trans_noise)
    if np.any(d_rot):
        R = pose.rotation @ euler_to_matrix(d_rot)
        new_pose = Pose.from_matrix(R, pose.translation + d_trans)
    else:
        new_pose = Pose(pose.quat, pose.translation + d_trans)
    depth = np.asarray(depth, dtype=float)
    if depth_noise > 0:
        factor = np.clip(1.0 + depth_noise * rng.normal(size=depth.shape), 0.2, None)
        new_depth = np.where(depth > 0, depth * factor, 0.0)
    else:
        new_depth = depth.copy()
    return new_pose, new_depth


def look_at_pose(center, target=(0.0, 0.0, 3.0)) -> Pose:
    """World-to-camera pose of a camera at ``center`` looking at ``target`` (y down)."""
    c = np.asarray(center, float)
    f = np.asarray(target, float) - c
    f /= np.linalg.norm(f)
    x = np.cross(np.array([0.0, 1.0, 0.0]), f)
    x /= np.linalg.norm(x)
    y = np.cross(f, x)
    R = np.stack([x, y, f])
    return Pose.from_matrix(R, -R @ c)


@dataclass
class SyntheticScene:
    spec: SceneSpec
    K: CameraIntrinsics
    poses: list[Pose]
    images: list[np.ndarray]
    depths: list[np.ndarray]
    feature_depths: list[np.ndarray]


def default_intrinsics(width: int = 256, height: int = 192, fov_deg: float = 60.0) -> CameraIntrinsics:
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
    return CameraIntrinsics(f, f, (width - 1) / 2, (height - 1) / 2, width, height)


def random_scene(seed: int, textureless: bool = False) -> SceneSpec:
    """A slanted plane, one to three spheres and a back wall, all within ~1.5-7 m."""
    rng = np.random.default_rng(seed)
    prims = [
        Plane(
            (rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(3.0, 3.8)),
            (rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3), -1.0),
            2.0,
            1 + int(rng.integers(0, 5)),
        )
    ]
    for _ in range(int(rng.integers(1, 4))):
        prims.append(
            Sphere(
                (rng.uniform(-0.8, 0.8), rng.uniform(-0.5, 0.5), rng.uniform(1.8, 2.8)),
                rng.uniform(0.2, 0.45),
                1 + int(rng.integers(0, 5)),
            )
        )
    if textureless:
        prims.insert(0, Plane((0.35, 0.1, 2.3), (0.0, 0.0, -1.0), 0.62, 0))
    return SceneSpec(primitives=tuple(prims), background=float(rng.uniform(5.5, 7.0)), seed=seed)


def make_scene(
    spec: SceneSpec,
    n_frames: int = 2,
    K: CameraIntrinsics | None = None,
    baseline: float = 0.2,
    seed: int = 0,
    look_depth: float = 2.6,
) -> SyntheticScene:
    """Render ``n_frames`` views; frame 0 sits at the origin looking down +z.

    The other cameras move mostly sideways (plus a little backwards) by
    ``baseline`` and turn toward a point ``look_depth`` ahead of frame 0,
    which keeps most of frame 0 in their view without large scale changes.
    """
    K = K or default_intrinsics()
    rng = np.random.default_rng(seed)
    poses = [Pose.identity()]
    for _ in range(1, n_frames):
        ang = rng.uniform(0, 2 * np.pi)
        lateral = baseline * np.array([np.cos(ang), 0.5 * np.sin(ang), 0.0])
        center = lateral + np.array([0.0, 0.0, -0.4 * baseline])
        target = (rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), look_depth)
        poses.append(look_at_pose(center, target=target))
    images, depths, fdepths = [], [], []
    Kf = K.downsample(4)
    for p in poses:
        img, d = render(spec, K, p)
        images.append(img)
        depths.append(d)
        fdepths.append(render_depth(spec, Kf, p))
    return SyntheticScene(spec, K, poses, images, depths, fdepths)
