"""Pure-numpy kernels. Reference path and fallback when numba is disabled.

The arithmetic is written element-wise in the same order as the numba
kernels so both paths agree to rounding.
"""

from __future__ import annotations

import numpy as np

Z_EPS = 1e-6
# warped coordinates this close to a pixel center are snapped onto it, so an
# identity warp samples the source exactly despite rounding in the unproject/project chain
SNAP = 1e-9


def _snap(a):
    r = np.floor(a + 0.5)
    return np.where(np.abs(a - r) < SNAP, r, a)


def warp_grid(intr, R, t, depth, width, height):
    """Project target pixels at ``depth`` (scalar or ``(H, W)``) into the source.

    Returns ``(u, v, z_src, valid)`` arrays of shape ``(H, W)``.
    """
    fx, fy, cx, cy = intr
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    d = np.broadcast_to(np.asarray(depth, dtype=np.float64), (height, width))
    X = (x - cx) / fx * d
    Y = (y - cy) / fy * d
    Z = d
    xs = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + t[0]
    ys = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + t[1]
    zs = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + t[2]
    front = zs > Z_EPS
    safe = np.where(front, zs, 1.0)
    u = _snap(fx * xs / safe + cx)
    v = _snap(fy * ys / safe + cy)
    valid = front & (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)
    return u, v, zs, valid


def sample_bilinear(img, u, v, valid):
    """Bilinear lookup of ``img`` (``(H, W)`` or ``(H, W, C)``); zeros where invalid."""
    h, w = img.shape[:2]
    uu = np.where(valid, u, 0.0)
    vv = np.where(valid, v, 0.0)
    x0 = np.floor(uu).astype(np.int64)
    y0 = np.floor(vv).astype(np.int64)
    ax = uu - x0
    ay = vv - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if img.ndim == 3:
        ax = ax[..., None]
        ay = ay[..., None]
    top = img[y0, x0] * (1.0 - ax) + img[y0, x1] * ax
    bot = img[y1, x0] * (1.0 - ax) + img[y1, x1] * ax
    out = top * (1.0 - ay) + bot * ay
    mask = valid[..., None] if img.ndim == 3 else valid
    return np.where(mask, out, 0.0)


def sample_nearest(depth, u, v, valid):
    """Nearest-neighbor lookup; zero (invalid) where the warp is invalid."""
    h, w = depth.shape
    uu = np.where(valid, u, 0.0)
    vv = np.where(valid, v, 0.0)
    xi = np.minimum(np.floor(uu + 0.5).astype(np.int64), w - 1)
    yi = np.minimum(np.floor(vv + 0.5).astype(np.int64), h - 1)
    return np.where(valid, depth[yi, xi], 0.0)


def sample_depth_bilinear(depth, u, v, valid):
    """Bilinear depth lookup; invalid when any of the four taps is invalid."""
    h, w = depth.shape
    uu = np.where(valid, u, 0.0)
    vv = np.where(valid, v, 0.0)
    x0 = np.floor(uu).astype(np.int64)
    y0 = np.floor(vv).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    d00, d01 = depth[y0, x0], depth[y0, x1]
    d10, d11 = depth[y1, x0], depth[y1, x1]
    ok = valid & (d00 > 0) & (d01 > 0) & (d10 > 0) & (d11 > 0)
    ax = uu - x0
    ay = vv - y0
    top = d00 * (1.0 - ax) + d01 * ax
    bot = d10 * (1.0 - ax) + d11 * ax
    return np.where(ok, top * (1.0 - ay) + bot * ay, 0.0)


def _pixel_cost(tgt, src, src_depth, u, v, zs, valid, w_geo, geo_clip, n_total, depth_bilinear):
    warped = sample_bilinear(src, u, v, valid)
    photo = np.abs(tgt - warped).sum(axis=-1) / n_total
    if depth_bilinear:
        ds = sample_depth_bilinear(src_depth, u, v, valid)
    else:
        ds = sample_nearest(src_depth, u, v, valid)
    has_geo = valid & (ds > 0.0)
    safe = np.where(has_geo, zs, 1.0)
    geo = np.where(has_geo, w_geo * np.minimum(np.abs(ds - zs) / safe, geo_clip), 0.0)
    return photo + geo


def dcv_cost(tgt, src, src_depth, intr, R, t, planes, w_geo, geo_clip, n_total, depth_bilinear):
    """Per-plane matching cost ``(L, H, W)`` of one source against the target."""
    h, w = tgt.shape[:2]
    out = np.empty((len(planes), h, w))
    for l, d in enumerate(planes):
        u, v, zs, valid = warp_grid(intr, R, t, d, w, h)
        out[l] = _pixel_cost(tgt, src, src_depth, u, v, zs, valid, w_geo, geo_clip, n_total, depth_bilinear)
    return out


def pcv_scores(tgt, tgt_depth, src, src_depth, intr, Rs, ts, w_geo, geo_clip, n_total, depth_bilinear):
    """Mean matching cost over covered pixels for each candidate motion.

    Candidates without any covered pixel score ``+inf``.
    """
    h, w = tgt.shape[:2]
    has_depth = tgt_depth > 0.0
    depth = np.where(has_depth, tgt_depth, 1.0)
    out = np.empty(len(Rs))
    for p in range(len(Rs)):
        u, v, zs, valid = warp_grid(intr, Rs[p], ts[p], depth, w, h)
        valid = valid & has_depth
        n = int(valid.sum())
        if n == 0:
            out[p] = np.inf
            continue
        c = _pixel_cost(tgt, src, src_depth, u, v, zs, valid, w_geo, geo_clip, n_total, depth_bilinear)
        out[p] = c[valid].sum() / n
    return out
