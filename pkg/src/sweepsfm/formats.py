"""Readers and writers for the on-disk formats.

* intrinsics: one line ``fx fy cx cy``
* poses: one line per frame ``qw qx qy qz tx ty tz`` (world-to-camera,
  unit quaternion); floats are written with ``repr`` so they round-trip
* depth: PFM (``Pf``, little-endian, scale ``-1.0``, rows stored bottom to
  top) or 16-bit PNG in millimeters; ``0`` marks invalid pixels
* point clouds: ASCII PLY with ``x y z`` floats and ``red green blue`` bytes

Every malformed input raises :class:`FormatError` with a message naming
the file and what is wrong with it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import CameraIntrinsics, Pose

QUAT_TOLERANCE = 1e-3
PNG_DEPTH_SCALE = 1000.0


class FormatError(ValueError):
    pass


def _numbers(line: str, n: int, path, lineno: int) -> list[float]:
    parts = line.split()
    if len(parts) != n:
        raise FormatError(f"{path}:{lineno}: expected {n} numbers, found {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"{path}:{lineno}: non-numeric value in {line.strip()!r}") from None
    if not all(np.isfinite(vals)):
        raise FormatError(f"{path}:{lineno}: non-finite value in {line.strip()!r}")
    return vals


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


# intrinsics


def read_intrinsics(path: str | Path, width: int, height: int) -> CameraIntrinsics:
    path = Path(path)
    lines = list(_content_lines(path.read_text()))
    if len(lines) != 1:
        raise FormatError(f"{path}: expected a single line 'fx fy cx cy', found {len(lines)} lines")
    fx, fy, cx, cy = _numbers(lines[0][1], 4, path, lines[0][0])
    try:
        return CameraIntrinsics(fx, fy, cx, cy, width, height)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_intrinsics(path: str | Path, K: CameraIntrinsics) -> None:
    Path(path).write_text(" ".join(repr(float(x)) for x in K.as_tuple()) + "\n")


# poses


def format_pose(pose: Pose) -> str:
    return " ".join(repr(float(x)) for x in (*pose.quat, *pose.translation))


def parse_pose(line: str, path="<pose>", lineno: int = 1) -> Pose:
    vals = _numbers(line, 7, path, lineno)
    q = np.array(vals[:4])
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > QUAT_TOLERANCE:
        raise FormatError(
            f"{path}:{lineno}: quaternion norm {norm:.6g} is not 1 (tolerance {QUAT_TOLERANCE:g}); "
            "normalize it by dividing qw qx qy qz by their norm"
        )
    return Pose(q, vals[4:])


def read_poses(path: str | Path) -> list[Pose]:
    path = Path(path)
    return [parse_pose(line, path, lineno) for lineno, line in _content_lines(path.read_text())]


def write_poses(path: str | Path, poses) -> None:
    Path(path).write_text("".join(format_pose(p) + "\n" for p in poses))


# depth maps


def write_pfm(path: str | Path, depth: np.ndarray) -> None:
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"PFM depth must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(depth[::-1], dtype="<f4").tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Single-channel PFM as float64; either byte order is accepted."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            raise FormatError(f"{path}: color PFM ('PF') is not a depth map; expected 'Pf'")
        if magic != b"Pf":
            raise FormatError(f"{path}: bad PFM magic {magic[:16]!r}; expected 'Pf'")
        dims = f.readline().split()
        try:
            w, h = (int(x) for x in dims)
        except ValueError:
            raise FormatError(f"{path}: bad PFM size line {b' '.join(dims)!r}") from None
        if w <= 0 or h <= 0:
            raise FormatError(f"{path}: PFM size {w}x{h} must be positive")
        try:
            scale = float(f.readline())
        except ValueError:
            raise FormatError(f"{path}: bad PFM scale line") from None
        if scale == 0.0:
            raise FormatError(f"{path}: PFM scale must be nonzero (its sign gives the byte order)")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h:
        raise FormatError(f"{path}: PFM holds {data.size} floats, header says {w}x{h}={w * h}")
    return data.reshape(h, w)[::-1].astype(np.float64)


def write_png16(path: str | Path, depth: np.ndarray) -> None:
    """Depth in meters to 16-bit millimeters; invalid or out-of-range pixels become 0."""
    depth = np.asarray(depth, dtype=np.float64)
    mm = np.where(np.isfinite(depth) & (depth > 0), np.rint(depth * PNG_DEPTH_SCALE), 0.0)
    mm = np.where(mm <= 65535, mm, 0.0).astype(np.uint16)
    Image.fromarray(mm).save(path)


def read_png16(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.array(im)
    except OSError as e:
        raise FormatError(f"{path}: unreadable PNG ({e})") from None
    if arr.ndim != 2 or arr.dtype != np.uint16:
        raise FormatError(f"{path}: depth PNG must be single-channel 16-bit, got {arr.dtype} {arr.shape}")
    return arr.astype(np.float64) / PNG_DEPTH_SCALE


def read_depth(path: str | Path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".png":
        return read_png16(path)
    raise FormatError(f"{path}: unsupported depth format {suffix!r}; use .pfm or 16-bit .png")


# images


def read_image(path: str | Path) -> np.ndarray:
    """Gray ``(H, W)`` or RGB ``(H, W, 3)`` float image in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode in ("RGBA", "P", "LA", "CMYK", "YCbCr"):
                im = im.convert("RGB" if im.mode != "LA" else "L")
            arr = np.array(im)
    except OSError as e:
        raise FormatError(f"{path}: unreadable image ({e})") from None
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == np.int32:
        return np.clip(arr, 0, 65535).astype(np.float64) / 65535.0
    if arr.dtype == bool:
        return arr.astype(np.float64)
    raise FormatError(f"{path}: unsupported pixel type {arr.dtype}")


def write_image(path: str | Path, image: np.ndarray) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.rint(img * 255.0).astype(np.uint8)).save(path)


# point clouds


def depth_to_points(depth: np.ndarray, K: CameraIntrinsics, pose: Pose, image: np.ndarray | None = None):
    """World points and RGB bytes for every valid pixel of ``depth``.

    ``image`` may be given at the depth resolution or at an integer multiple
    of it; in the latter case it is block-averaged down.
    """
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    if (K.width, K.height) != (w, h):
        raise ValueError(f"intrinsics are for {K.width}x{K.height}, depth is {w}x{h}")
    v, u = np.nonzero(np.isfinite(depth) & (depth > 0))
    d = depth[v, u]
    cam = np.stack([(u - K.cx) / K.fx * d, (v - K.cy) / K.fy * d, d], axis=1)
    world = (cam - pose.translation) @ pose.rotation
    if image is None:
        colors = np.full((len(d), 3), 255, dtype=np.uint8)
    else:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        f = img.shape[0] // h
        if f < 1 or img.shape[:2] != (h * f, w * f):
            raise ValueError(f"image {img.shape[:2]} is not an integer multiple of depth {(h, w)}")
        if f > 1:
            img = img.reshape(h, f, w, f, 3).mean(axis=(1, 3))
        colors = np.rint(np.clip(img[v, u], 0.0, 1.0) * 255.0).astype(np.uint8)
    return world, colors


def write_ply(path: str | Path, points: np.ndarray, colors: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    if len(points) != len(colors):
        raise ValueError("points and colors differ in length")
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(points)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    rows = [f"{x:.7g} {y:.7g} {z:.7g} {r} {g} {b}\n" for (x, y, z), (r, g, b) in zip(points, colors)]
    Path(path).write_text(header + "".join(rows))


def read_ply(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "ply" or "format ascii 1.0" not in lines[:3]:
        raise FormatError(f"{path}: not an ASCII PLY file")
    try:
        end = lines.index("end_header")
    except ValueError:
        raise FormatError(f"{path}: PLY header has no end_header") from None
    n = next((int(l.split()[2]) for l in lines[:end] if l.startswith("element vertex")), None)
    if n is None:
        raise FormatError(f"{path}: PLY header declares no vertex element")
    body = lines[end + 1 : end + 1 + n]
    if len(body) != n:
        raise FormatError(f"{path}: PLY declares {n} vertices, found {len(body)}")
    data = np.array([[float(x) for x in l.split()] for l in body]).reshape(n, 6)
    return data[:, :3], data[:, 3:].astype(np.uint8)
