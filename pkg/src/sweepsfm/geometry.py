"""Pinhole camera model, rigid poses and the warping coordinate math.

Conventions
-----------
* Pixel centers sit at integer coordinates; ``u`` runs along image columns
  and ``v`` along rows.
* A :class:`Pose` maps world coordinates into the camera frame
  (``X_cam = R @ X_world + t``).
* A *relative* pose maps target-camera coordinates to source-camera
  coordinates, i.e. ``relative(target, source)``.
* Euler deltas are stored as ``(rx, ry, rz)`` radians and turned into a
  rotation with the intrinsic Z-Y-X sequence ``Rz(rz) @ Ry(ry) @ Rx(rx)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

Z_EPS = 1e-6
# same tolerance as the kernels: coordinates this close to a pixel center are
# snapped onto it, so an identity warp keeps border pixels inside the image
SNAP = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def downsample(self, factor: int) -> "CameraIntrinsics":
        """Intrinsics of the grid obtained by ``factor x factor`` block pooling.

        Cell ``j`` of the pooled grid covers pixels ``factor*j .. factor*j + factor-1``
        so its center lies at ``factor*j + (factor-1)/2`` in the original image.
        """
        if self.width % factor or self.height % factor:
            raise ValueError(f"image size {self.width}x{self.height} not divisible by {factor}")
        off = (factor - 1) / 2.0
        return CameraIntrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=(self.cx - off) / factor,
            cy=(self.cy - off) / factor,
            width=self.width // factor,
            height=self.height // factor,
        )

    def upsample(self, factor: int) -> "CameraIntrinsics":
        off = (factor - 1) / 2.0
        return CameraIntrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor + off,
            cy=self.cy * factor + off,
            width=self.width * factor,
            height=self.height * factor,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (float(self.fx), float(self.fy), float(self.cx), float(self.cy))


class PixelCoord(NamedTuple):
    """Continuous pixel coordinates; fields may be scalars or same-shaped arrays."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray


def euler_to_matrix(euler) -> np.ndarray:
    """Rotation matrix (or stack) for ``(rx, ry, rz)`` deltas, intrinsic Z-Y-X."""
    e = np.asarray(euler, dtype=float)
    return Rotation.from_euler("ZYX", e[..., ::-1]).as_matrix()


def matrix_to_euler(R) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix`; returns ``(rx, ry, rz)``."""
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_euler("ZYX")[..., ::-1]


def _normalize_quat(q: np.ndarray) -> np.ndarray:
    n = float(np.sqrt(np.dot(q, q)))
    if n == 0.0:
        raise ValueError("zero quaternion")
    # Leave already-unit quaternions bit-identical so files round-trip exactly.
    if abs(n - 1.0) <= 4e-16:
        return q
    return q / n


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid motion stored as a unit quaternion ``(w, x, y, z)`` plus translation."""

    quat: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.array(self.quat, dtype=float).reshape(4)
        t = np.array(self.translation, dtype=float).reshape(3)
        q = _normalize_quat(q)
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, R, t=(0.0, 0.0, 0.0)) -> "Pose":
        x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
        return cls(np.array([w, x, y, z]), t)

    @classmethod
    def from_euler(cls, euler, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls.from_matrix(euler_to_matrix(euler), t)

    @cached_property
    def rotation(self) -> np.ndarray:
        w, x, y, z = self.quat
        R = Rotation.from_quat([x, y, z, w]).as_matrix()
        R.flags.writeable = False
        return R

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        w, x, y, z = self.quat
        Rt = self.rotation.T
        return Pose(np.array([w, -x, -y, -z]), -Rt @ self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the pose to points of shape ``(..., 3)``."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def scaled(self, s: float) -> "Pose":
        return Pose(self.quat, self.translation * s)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0)
        )

    def __repr__(self) -> str:
        return f"Pose(quat={self.quat.tolist()}, translation={self.translation.tolist()})"


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def compose(a: Pose, b: Pose) -> Pose:
    """``a`` after ``b``: ``x -> a(b(x))``."""
    q = _quat_mul(a.quat, b.quat)
    q = q / np.sqrt(np.dot(q, q))
    return Pose(q, a.rotation @ b.translation + a.translation)


def relative(target: Pose, source: Pose) -> Pose:
    """Motion taking target-camera coordinates to source-camera coordinates."""
    return compose(source, target.inverse())


def project(K: CameraIntrinsics, p) -> PixelCoord:
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    valid = z > Z_EPS
    safe_z = np.where(valid, z, 1.0)
    u = np.where(valid, K.fx * x / safe_z + K.cx, np.nan)
    v = np.where(valid, K.fy * y / safe_z + K.cy, np.nan)
    return PixelCoord(u, v, valid)


def unproject(K: CameraIntrinsics, u, v, d) -> np.ndarray:
    """Camera-frame point at depth ``d`` (z-coordinate) behind pixel ``(u, v)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("depth must be positive")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    x = (u - K.cx) / K.fx * d
    y = (v - K.cy) / K.fy * d
    x, y, z = np.broadcast_arrays(x, y, d)
    return np.stack([x, y, z], axis=-1)


def warp_coord(u, v, d, K: CameraIntrinsics, rel: Pose) -> PixelCoord:
    """Where target pixel ``(u, v)`` at depth ``d`` lands in the source image."""
    pc = project(K, rel.transform(unproject(K, u, v, d)))
    pu, pv = _snap(pc.u), _snap(pc.v)
    inside = pc.valid & (pu >= 0) & (pu < K.width) & (pv >= 0) & (pv < K.height)
    return PixelCoord(pu, pv, inside)


def _snap(a):
    r = np.floor(a + 0.5)
    return np.where(np.abs(a - r) < SNAP, r, a)


def pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer pixel-center coordinates as float ``(u, v)`` arrays of shape ``(H, W)``."""
    v, u = np.mgrid[0:height, 0:width].astype(float)
    return u, v
