"""Deterministic per-pixel descriptors at quarter resolution.

Channel layout of a feature map (``H/4 x W/4 x channels``):

====================  =========================================
intensity             one per image channel (1 gray or 3 RGB)
gradient x, y         central differences of the pooled gray
census (8)            sign of neighbor minus center, 3x3 ring
box means (3)         pooled gray averaged over 3, 5, 9 cells
zero padding          up to ``channels``
====================  =========================================

Every channel is mapped to ``[-1, 1]`` with a fixed affine map so that
translating the image by a multiple of the stride translates the features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

STRIDE = 4

# (dy, dx) of the census ring, row-major starting top-left
_CENSUS_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class FeatureConfig:
    channels: int = 32
    box_windows: tuple[int, ...] = (3, 5, 9)
    # differences below this are treated as ties in the census ring
    census_eps: float = 1e-3
    # gradients are scaled by this and saturated to [-1, 1]
    gradient_gain: float = 4.0


def image_to_float(image: np.ndarray) -> np.ndarray:
    """Convert an integer or float image to float64 in ``[0, 1]``."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float64) / 65535.0
    return np.clip(img.astype(np.float64), 0.0, 1.0)


def block_mean(image: np.ndarray, factor: int = STRIDE) -> np.ndarray:
    """Average non-overlapping ``factor x factor`` blocks (keeps trailing channel axis)."""
    h, w = image.shape[:2]
    rest = image.shape[2:]
    return image.reshape(h // factor, factor, w // factor, factor, *rest).mean(axis=(1, 3))


def _shift_edge(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[y, x] = a[y + dy, x + dx]`` with edge replication."""
    p = np.pad(a, 1, mode="edge")
    h, w = a.shape
    return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]


def extract_features(image: np.ndarray, config: FeatureConfig | None = None) -> np.ndarray:
    """Quarter-resolution feature map of shape ``(H/4, W/4, channels)``."""
    config = config or FeatureConfig()
    img = image_to_float(image)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected HxW or HxWx3 image, got shape {np.shape(image)}")
    h, w = img.shape[:2]
    if h % STRIDE or w % STRIDE:
        raise ValueError(f"image size {w}x{h} is not divisible by {STRIDE}")

    pooled = block_mean(img)
    gray = pooled.mean(axis=2)

    chans = [2.0 * pooled[:, :, c] - 1.0 for c in range(pooled.shape[2])]

    # central differences of values in [0, 1] lie in [-1, 1] before the gain
    gx = _shift_edge(gray, 0, 1) - _shift_edge(gray, 0, -1)
    gy = _shift_edge(gray, 1, 0) - _shift_edge(gray, -1, 0)
    chans.append(np.clip(config.gradient_gain * gx, -1.0, 1.0))
    chans.append(np.clip(config.gradient_gain * gy, -1.0, 1.0))

    for dy, dx in _CENSUS_OFFSETS:
        diff = _shift_edge(gray, dy, dx) - gray
        chans.append(np.where(np.abs(diff) <= config.census_eps, 0.0, np.sign(diff)))

    for win in config.box_windows:
        # the filter's running sums can overshoot [0, 1] by an ulp
        chans.append(np.clip(2.0 * uniform_filter(gray, size=win, mode="nearest") - 1.0, -1.0, 1.0))

    if len(chans) > config.channels:
        raise ValueError(f"descriptor needs {len(chans)} channels, config allows {config.channels}")
    feat = np.zeros((h // STRIDE, w // STRIDE, config.channels))
    for i, c in enumerate(chans):
        feat[:, :, i] = c
    return feat


def gradient_magnitude(image: np.ndarray) -> np.ndarray:
    """Quarter-resolution gradient magnitude of the gray image (a texture measure)."""
    img = image_to_float(image)
    gray = block_mean(img if img.ndim == 2 else img.mean(axis=2))
    gx = _shift_edge(gray, 0, 1) - _shift_edge(gray, 0, -1)
    gy = _shift_edge(gray, 1, 0) - _shift_edge(gray, -1, 0)
    return np.hypot(gx, gy)
