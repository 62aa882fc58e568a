"""Flat-vs-complex pixel classification.

Two detectors produce a binary mask (0 = flat region, 1 = complex region):
a Canny pipeline with a final dilation, and a local total-variation threshold.
Masks are uint8 arrays of {0, 1} with the source image's shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import reflect_pad


@dataclass(frozen=True)
class CannyParams:
    """Blur width, hysteresis thresholds on the [0,1] scale, dilation side."""

    gauss_sigma: float = 1.0
    low: float = 0.1
    high: float = 0.2
    dilation: int = 5

    def __post_init__(self):
        if not (0 <= self.low <= self.high):
            raise ValueError("need 0 <= low <= high")
        if self.dilation < 1 or self.dilation % 2 == 0:
            raise ValueError("dilation side must be odd and >= 1")
        if self.gauss_sigma <= 0:
            raise ValueError("gauss_sigma must be > 0")


def dilate(mask: np.ndarray, k: int) -> np.ndarray:
    """Morphological dilation by a k x k all-ones element, mirror borders."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"structuring element side must be odd, got {k}")
    mask = np.asarray(mask)
    if k == 1:
        return mask.astype(np.uint8).copy()
    return ndimage.maximum_filter(mask.astype(np.uint8), size=k, mode="mirror")


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Zero pixels that are not local maxima along the gradient direction.

    Directions are quantized to 4 bins (0, 45, 90, 135 degrees); each pixel is
    compared with its two neighbors along the quantized direction, ties kept.
    Border comparisons use mirror padding.
    """
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1, mode="reflect")
    h, w = mag.shape

    def shifted(dr: int, dc: int) -> np.ndarray:
        return padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    # neighbor offsets per bin: 0 deg -> horizontal gradient, 45 -> down-right,
    # 90 -> vertical, 135 -> down-left (rows grow downward)
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros(mag.shape, dtype=bool)
    for sel, (dr, dc) in bins:
        ok = (mag >= shifted(dr, dc)) & (mag >= shifted(-dr, -dc))
        keep |= sel & ok
    return np.where(keep, mag, 0.0)


def canny_edges(img: np.ndarray, params: CannyParams) -> np.ndarray:
    """Edge pixels before dilation: blur, Sobel, suppression, hysteresis.

    The input (0-255 scale) is normalized to [0,1]; the hysteresis thresholds
    apply to the Sobel gradient magnitude of the blurred image. Weak pixels
    (>= low) survive only in 8-connected components that contain a strong
    pixel (>= high).
    """
    img = np.asarray(img, dtype=np.float64) / 255.0
    blurred = ndimage.gaussian_filter(img, params.gauss_sigma, truncate=3.0, mode="mirror")
    gx = ndimage.sobel(blurred, axis=1, mode="mirror")
    gy = ndimage.sobel(blurred, axis=0, mode="mirror")
    mag = np.hypot(gx, gy)
    nms = _nonmax_suppress(mag, gx, gy)
    weak = nms >= params.low
    strong = nms >= params.high
    if not strong.any():
        return np.zeros(img.shape, dtype=np.uint8)
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    kept = np.zeros(count + 1, dtype=bool)
    kept[np.unique(labels[strong])] = True
    kept[0] = False
    return kept[labels].astype(np.uint8)


def canny_mask(img: np.ndarray, params: CannyParams) -> np.ndarray:
    """Complex-region mask: Canny edges dilated by params.dilation."""
    return dilate(canny_edges(img, params), params.dilation)


def tv_mask(img: np.ndarray, window: int = 7, percentile: float = 0.75) -> np.ndarray:
    """Mask of pixels whose windowed total variation exceeds a global quantile.

    Per pixel: |forward difference in x| + |forward difference in y| with
    mirror borders, box-summed over a window x window neighborhood; the mask
    marks values strictly above the given quantile of the map, so at most a
    (1 - percentile) share of pixels is set (plus ties slack).
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    if not 0 < percentile < 1:
        raise ValueError("percentile must be in (0, 1)")
    img = np.asarray(img, dtype=np.float64)
    padded = reflect_pad(img, 1)
    dx = padded[1:-1, 2:] - padded[1:-1, 1:-1]
    dy = padded[2:, 1:-1] - padded[1:-1, 1:-1]
    tv = np.abs(dx) + np.abs(dy)
    local = ndimage.uniform_filter(tv, size=window, mode="mirror")
    threshold = np.quantile(local, percentile, method="higher")
    return (local > threshold).astype(np.uint8)
