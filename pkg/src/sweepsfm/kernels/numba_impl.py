"""numba-compiled kernels mirroring :mod:`numpy_impl` loop for loop."""

from __future__ import annotations

import numpy as np
from numba import njit, prange

Z_EPS = 1e-6
SNAP = 1e-9

_OPTS = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")


@njit(**_OPTS)
def _snap(a):
    r = np.floor(a + 0.5)
    return r if abs(a - r) < SNAP else a


@njit(**_OPTS)
def _warp_px(x, y, d, fx, fy, cx, cy, R, t, width, height):
    X = (x - cx) / fx * d
    Y = (y - cy) / fy * d
    Z = d
    xs = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + t[0]
    ys = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + t[1]
    zs = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + t[2]
    if not zs > Z_EPS:
        return 0.0, 0.0, zs, False
    u = _snap(fx * xs / zs + cx)
    v = _snap(fy * ys / zs + cy)
    ok = u >= 0.0 and u < width and v >= 0.0 and v < height
    return u, v, zs, ok


@njit(**_OPTS)
def _photo(tgt, src, y, x, u, v, valid, n_total):
    h, w, c = src.shape
    acc = 0.0
    if not valid:
        for k in range(c):
            acc += abs(tgt[y, x, k])
        return acc / n_total
    x0 = int(np.floor(u))
    y0 = int(np.floor(v))
    ax = u - x0
    ay = v - y0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    for k in range(c):
        top = src[y0, x0, k] * (1.0 - ax) + src[y0, x1, k] * ax
        bot = src[y1, x0, k] * (1.0 - ax) + src[y1, x1, k] * ax
        acc += abs(tgt[y, x, k] - (top * (1.0 - ay) + bot * ay))
    return acc / n_total


@njit(**_OPTS)
def _depth_at(depth, u, v, bilinear):
    h, w = depth.shape
    if not bilinear:
        xi = min(int(np.floor(u + 0.5)), w - 1)
        yi = min(int(np.floor(v + 0.5)), h - 1)
        return depth[yi, xi]
    x0 = int(np.floor(u))
    y0 = int(np.floor(v))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    d00 = depth[y0, x0]
    d01 = depth[y0, x1]
    d10 = depth[y1, x0]
    d11 = depth[y1, x1]
    if not (d00 > 0 and d01 > 0 and d10 > 0 and d11 > 0):
        return 0.0
    ax = u - x0
    ay = v - y0
    top = d00 * (1.0 - ax) + d01 * ax
    bot = d10 * (1.0 - ax) + d11 * ax
    return top * (1.0 - ay) + bot * ay


@njit(**_OPTS)
def _cost_px(tgt, src, src_depth, y, x, u, v, zs, valid, w_geo, geo_clip, n_total, bilinear):
    c = _photo(tgt, src, y, x, u, v, valid, n_total)
    if valid:
        ds = _depth_at(src_depth, u, v, bilinear)
        if ds > 0.0:
            c += w_geo * min(abs(ds - zs) / zs, geo_clip)
    return c


@njit(parallel=True, **_OPTS)
def _dcv_cost(tgt, src, src_depth, fx, fy, cx, cy, R, t, planes, w_geo, geo_clip, n_total, bilinear):
    h, w = tgt.shape[0], tgt.shape[1]
    L = planes.shape[0]
    out = np.empty((L, h, w))
    for l in prange(L):
        d = planes[l]
        for y in range(h):
            for x in range(w):
                u, v, zs, ok = _warp_px(float(x), float(y), d, fx, fy, cx, cy, R, t, w, h)
                out[l, y, x] = _cost_px(tgt, src, src_depth, y, x, u, v, zs, ok, w_geo, geo_clip, n_total, bilinear)
    return out


@njit(parallel=True, **_OPTS)
def _pcv_scores(tgt, tgt_depth, src, src_depth, fx, fy, cx, cy, Rs, ts, w_geo, geo_clip, n_total, bilinear):
    h, w = tgt.shape[0], tgt.shape[1]
    P = Rs.shape[0]
    out = np.empty(P)
    for p in prange(P):
        R = Rs[p]
        t = ts[p]
        acc = 0.0
        n = 0
        for y in range(h):
            for x in range(w):
                d = tgt_depth[y, x]
                if not d > 0.0:
                    continue
                u, v, zs, ok = _warp_px(float(x), float(y), d, fx, fy, cx, cy, R, t, w, h)
                if not ok:
                    continue
                acc += _cost_px(tgt, src, src_depth, y, x, u, v, zs, ok, w_geo, geo_clip, n_total, bilinear)
                n += 1
        out[p] = acc / n if n > 0 else np.inf
    return out


def dcv_cost(tgt, src, src_depth, intr, R, t, planes, w_geo, geo_clip, n_total, depth_bilinear):
    fx, fy, cx, cy = (float(a) for a in intr)
    return _dcv_cost(
        np.ascontiguousarray(tgt, dtype=np.float64),
        np.ascontiguousarray(src, dtype=np.float64),
        np.ascontiguousarray(src_depth, dtype=np.float64),
        fx, fy, cx, cy,
        np.ascontiguousarray(R, dtype=np.float64),
        np.ascontiguousarray(t, dtype=np.float64),
        np.ascontiguousarray(planes, dtype=np.float64),
        float(w_geo), float(geo_clip), float(n_total), bool(depth_bilinear),
    )


def pcv_scores(tgt, tgt_depth, src, src_depth, intr, Rs, ts, w_geo, geo_clip, n_total, depth_bilinear):
    fx, fy, cx, cy = (float(a) for a in intr)
    return _pcv_scores(
        np.ascontiguousarray(tgt, dtype=np.float64),
        np.ascontiguousarray(tgt_depth, dtype=np.float64),
        np.ascontiguousarray(src, dtype=np.float64),
        np.ascontiguousarray(src_depth, dtype=np.float64),
        fx, fy, cx, cy,
        np.ascontiguousarray(Rs, dtype=np.float64),
        np.ascontiguousarray(ts, dtype=np.float64),
        float(w_geo), float(geo_clip), float(n_total), bool(depth_bilinear),
    )
