"""Per-pixel kernels shared by rendering, augmentation and the tracker.

Every kernel has a numba implementation and a numpy implementation that
produce identical output. ``backend()`` reports which one the public
functions dispatch to; ``use_backend`` switches it (tests and the benchmark
exercise both).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy import ndimage

from uavloc._accel import NUMBA_AVAILABLE, NUMBA_ENABLED, njit

_BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def backend() -> str:
    return _BACKEND


@contextmanager
def use_backend(name: str):
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    previous = _BACKEND
    _BACKEND = name
    try:
        yield
    finally:
        _BACKEND = previous


# ---------------------------------------------------------------------------
# Convex quad rasterisation (pixel lit iff its centre is inside a quad)
# ---------------------------------------------------------------------------


@njit
def _rasterise_quads_numba(quads, height, width):
    out = np.zeros((height, width), dtype=np.uint8)
    for k in range(quads.shape[0]):
        q = quads[k]
        c0 = max(int(np.floor(q[:, 0].min())), 0)
        c1 = min(int(np.ceil(q[:, 0].max())), width - 1)
        r0 = max(int(np.floor(q[:, 1].min())), 0)
        r1 = min(int(np.ceil(q[:, 1].max())), height - 1)
        for r in range(r0, r1 + 1):
            py = float(r)
            for c in range(c0, c1 + 1):
                px = float(c)
                pos = 0
                neg = 0
                for e in range(4):
                    ax = q[e, 0]
                    ay = q[e, 1]
                    bx = q[(e + 1) % 4, 0]
                    by = q[(e + 1) % 4, 1]
                    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                    if cross > 0.0:
                        pos += 1
                    elif cross < 0.0:
                        neg += 1
                if pos == 0 or neg == 0:
                    out[r, c] = 1
    return out


def _rasterise_quads_numpy(quads, height, width):
    out = np.zeros((height, width), dtype=np.uint8)
    for q in quads:
        c0 = max(int(np.floor(q[:, 0].min())), 0)
        c1 = min(int(np.ceil(q[:, 0].max())), width - 1)
        r0 = max(int(np.floor(q[:, 1].min())), 0)
        r1 = min(int(np.ceil(q[:, 1].max())), height - 1)
        if c1 < c0 or r1 < r0:
            continue
        py, px = np.mgrid[r0 : r1 + 1, c0 : c1 + 1].astype(np.float64)
        pos = np.zeros(py.shape, dtype=np.int64)
        neg = np.zeros(py.shape, dtype=np.int64)
        for e in range(4):
            ax, ay = q[e]
            bx, by = q[(e + 1) % 4]
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            pos += cross > 0.0
            neg += cross < 0.0
        inside = (pos == 0) | (neg == 0)
        out[r0 : r1 + 1, c0 : c1 + 1] |= inside.astype(np.uint8)
    return out


def rasterise_quads(quads: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rasterise convex quads given as ``(n, 4, 2)`` (column, row) vertices.

    Pixel ``(r, c)`` has its centre at ``(c, r)``. A pixel is lit iff its
    centre lies inside or on the boundary of at least one quad.
    """
    quads = np.ascontiguousarray(quads, dtype=np.float64).reshape(-1, 4, 2)
    if _BACKEND == "numba":
        return _rasterise_quads_numba(quads, int(height), int(width))
    return _rasterise_quads_numpy(quads, int(height), int(width))


# ---------------------------------------------------------------------------
# Tiled window masking (the masking half of NoisyCutout)
# ---------------------------------------------------------------------------


@njit
def _apply_window_masks_numba(img, size, masked, white):
    out = img.copy()
    h, w = img.shape
    for i in range(masked.shape[0]):
        for j in range(masked.shape[1]):
            if masked[i, j]:
                val = np.uint8(1) if white[i, j] else np.uint8(0)
                r0 = i * size
                c0 = j * size
                for r in range(r0, min(r0 + size, h)):
                    for c in range(c0, min(c0 + size, w)):
                        out[r, c] = val
    return out


def _apply_window_masks_numpy(img, size, masked, white):
    h, w = img.shape
    m = np.repeat(np.repeat(masked, size, axis=0), size, axis=1)[:h, :w]
    wt = np.repeat(np.repeat(white, size, axis=0), size, axis=1)[:h, :w]
    out = img.copy()
    out[m & wt] = 1
    out[m & ~wt] = 0
    return out


def apply_window_masks(img: np.ndarray, size: int, masked: np.ndarray, white: np.ndarray) -> np.ndarray:
    """Overwrite every flagged ``size x size`` tile (top-left tiling) with 1 or 0.

    ``masked`` and ``white`` are boolean grids of shape
    ``(ceil(h / size), ceil(w / size))``; edge tiles are clipped.
    """
    img = np.ascontiguousarray(img, dtype=np.uint8)
    masked = np.ascontiguousarray(masked, dtype=np.bool_)
    white = np.ascontiguousarray(white, dtype=np.bool_)
    if _BACKEND == "numba":
        return _apply_window_masks_numba(img, int(size), masked, white)
    return _apply_window_masks_numpy(img, int(size), masked, white)


# ---------------------------------------------------------------------------
# Gaussian blur followed by "non-zero -> 1" thresholding
# ---------------------------------------------------------------------------


def gaussian_taps(ksize: int) -> np.ndarray:
    """Normalised 1-D Gaussian taps, sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {ksize}")
    if ksize == 1:
        return np.ones(1)
    sigma = 0.3 * ((ksize - 1) / 2 - 1) + 0.8
    x = np.arange(ksize) - (ksize - 1) / 2
    taps = np.exp(-(x**2) / (2 * sigma**2))
    return taps / taps.sum()


def _reflect101_index(n: int, radius: int) -> np.ndarray:
    """Source index of each padded position under reflect-101 borders."""
    idx = np.arange(-radius, n + radius)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


@njit
def _blur_threshold_numba(img, taps_x, taps_y, cols, rows):
    h, w = img.shape
    tmp = np.empty((rows.shape[0], w), dtype=np.float64)
    for i in range(rows.shape[0]):
        r = rows[i]
        for c in range(w):
            acc = 0.0
            for k in range(taps_x.shape[0]):
                acc += taps_x[k] * img[r, cols[c + k]]
            tmp[i, c] = acc
    out = np.zeros((h, w), dtype=np.uint8)
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for k in range(taps_y.shape[0]):
                acc += taps_y[k] * tmp[r + k, c]
            if acc > 0.0:
                out[r, c] = 1
    return out


def _blur_threshold_numpy(img, taps_x, taps_y):
    tmp = ndimage.correlate1d(img.astype(np.float64), taps_x, axis=1, mode="mirror")
    tmp = ndimage.correlate1d(tmp, taps_y, axis=0, mode="mirror")
    return (tmp > 0.0).astype(np.uint8)


def blur_threshold(img: np.ndarray, kernel: tuple[int, int]) -> np.ndarray:
    """Gaussian-blur a {0,1} image with ``kernel = (width, height)`` and map non-zero to 1.

    Borders reflect without repeating the edge pixel.
    """
    kw, kh = kernel
    img = np.ascontiguousarray(img, dtype=np.uint8)
    taps_x = gaussian_taps(int(kw))
    taps_y = gaussian_taps(int(kh))
    if _BACKEND == "numba":
        cols = _reflect101_index(img.shape[1], len(taps_x) // 2)
        rows = _reflect101_index(img.shape[0], len(taps_y) // 2)
        return _blur_threshold_numba(img, taps_x, taps_y, cols, rows)
    return _blur_threshold_numpy(img, taps_x, taps_y)


# ---------------------------------------------------------------------------
# Green-channel background difference binarisation
# ---------------------------------------------------------------------------


@njit
def _binarise_numba(green, bg_green, tau, green_threshold):
    h, w = green.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for r in range(h):
        for c in range(w):
            g = np.int32(green[r, c])
            if g - np.int32(bg_green[r, c]) > tau and g > green_threshold:
                out[r, c] = 1
    return out


def _binarise_numpy(green, bg_green, tau, green_threshold):
    g = green.astype(np.int32)
    mask = (g - bg_green.astype(np.int32)) > tau
    return (mask & (g > green_threshold)).astype(np.uint8)


def binarise(green: np.ndarray, bg_green: np.ndarray, tau: int, green_threshold: int) -> np.ndarray:
    """``(green - bg_green > tau) AND (green > green_threshold)`` as a {0,1} uint8 image."""
    green = np.ascontiguousarray(green, dtype=np.uint8)
    bg_green = np.ascontiguousarray(bg_green, dtype=np.uint8)
    if green.shape != bg_green.shape:
        raise ValueError(f"shape mismatch: {green.shape} vs {bg_green.shape}")
    if _BACKEND == "numba":
        return _binarise_numba(green, bg_green, int(tau), int(green_threshold))
    return _binarise_numpy(green, bg_green, int(tau), int(green_threshold))
