"""Training-time augmentation of binary marker images.

``noisy_cutout`` tiles the image with square windows of one random size and
overwrites a few of them with ones or zeros, then blurs and re-binarises.
``sp_cutout`` is the comparison baseline: salt-and-pepper noise followed by a
single fixed-size zero mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from uavloc import kernels
from uavloc.errors import ConfigError, DataError
from uavloc.synthgen import LabeledBinaryImage


@dataclass(frozen=True)
class NoisyCutoutConfig:
    window_size_range: tuple[int, int] = (1, 31)
    mask_probability: float = 0.05
    white_fraction: float = 0.5
    blur_kernels: tuple[tuple[int, int], ...] = ((1, 1), (1, 3), (3, 1), (3, 3))

    def __post_init__(self):
        lo, hi = self.window_size_range
        if not 1 <= lo <= hi <= 31:
            raise ConfigError(f"window sizes must satisfy 1 <= lo <= hi <= 31, got {self.window_size_range}")
        for name in ("mask_probability", "white_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        if not self.blur_kernels:
            raise ConfigError("at least one blur kernel is required")


@dataclass(frozen=True)
class SPCutoutConfig:
    amount: float = 0.05
    mask_size: int = 16

    def __post_init__(self):
        if not 0.0 <= self.amount <= 1.0:
            raise ConfigError("salt-and-pepper amount must lie in [0, 1]")
        if self.mask_size < 1:
            raise ConfigError("cutout mask size must be >= 1")


@dataclass
class NoisyCutoutTrace:
    """What one ``noisy_cutout`` call did (used by the statistics tests)."""

    window_size: int
    n_windows: int
    n_masked: int
    n_white: int
    kernel: tuple[int, int]


def _check_binary(pixels: np.ndarray):
    if pixels.ndim != 2:
        raise DataError(f"expected a single-channel image, got shape {pixels.shape}")
    if pixels.size and (pixels.min() < 0 or pixels.max() > 1 or not np.all((pixels == 0) | (pixels == 1))):
        raise DataError("augmentation input must be strictly binary")


def noisy_cutout_pixels(pixels: np.ndarray, cfg: NoisyCutoutConfig, rng: np.random.Generator):
    """Array form of :func:`noisy_cutout`; returns ``(augmented, trace)``."""
    _check_binary(pixels)
    h, w = pixels.shape
    size = int(rng.integers(cfg.window_size_range[0], cfg.window_size_range[1] + 1))
    ny, nx = -(-h // size), -(-w // size)
    masked = rng.random((ny, nx)) < cfg.mask_probability
    white = rng.random((ny, nx)) < cfg.white_fraction
    kernel = tuple(cfg.blur_kernels[int(rng.integers(len(cfg.blur_kernels)))])
    out = kernels.apply_window_masks(pixels, size, masked, white)
    out = kernels.blur_threshold(out, kernel)
    trace = NoisyCutoutTrace(size, ny * nx, int(masked.sum()), int((masked & white).sum()), kernel)
    return out, trace


def noisy_cutout(img: LabeledBinaryImage, cfg: NoisyCutoutConfig, rng: np.random.Generator) -> LabeledBinaryImage:
    out, _ = noisy_cutout_pixels(img.pixels, cfg, rng)
    return img.with_pixels(out)


def salt_pepper_pixels(pixels: np.ndarray, amount: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= amount <= 1.0:
        raise ConfigError("salt-and-pepper amount must lie in [0, 1]")
    _check_binary(pixels)
    draw = rng.random(pixels.shape)
    out = pixels.astype(np.uint8, copy=True)
    out[draw < amount / 2] = 1
    out[(draw >= amount / 2) & (draw < amount)] = 0
    return out


def salt_pepper(img: LabeledBinaryImage, amount: float, rng: np.random.Generator) -> LabeledBinaryImage:
    """Set each pixel to 1 with probability ``amount / 2`` and to 0 with probability ``amount / 2``."""
    return img.with_pixels(salt_pepper_pixels(img.pixels, amount, rng))


def cutout_pixels(pixels: np.ndarray, mask_size: int, rng: np.random.Generator) -> np.ndarray:
    if mask_size < 1:
        raise ConfigError("cutout mask size must be >= 1")
    _check_binary(pixels)
    h, w = pixels.shape
    cy, cx = int(rng.integers(h)), int(rng.integers(w))
    r0, c0 = cy - mask_size // 2, cx - mask_size // 2
    out = pixels.astype(np.uint8, copy=True)
    out[max(r0, 0) : max(r0 + mask_size, 0), max(c0, 0) : max(c0 + mask_size, 0)] = 0
    return out


def cutout(img: LabeledBinaryImage, mask_size: int, rng: np.random.Generator) -> LabeledBinaryImage:
    """Zero one ``mask_size`` square centred on a uniformly drawn pixel (clipped at borders)."""
    return img.with_pixels(cutout_pixels(img.pixels, mask_size, rng))


def sp_cutout_pixels(pixels: np.ndarray, cfg: SPCutoutConfig, rng: np.random.Generator) -> np.ndarray:
    return cutout_pixels(salt_pepper_pixels(pixels, cfg.amount, rng), cfg.mask_size, rng)


def sp_cutout(img: LabeledBinaryImage, cfg: SPCutoutConfig, rng: np.random.Generator) -> LabeledBinaryImage:
    return img.with_pixels(sp_cutout_pixels(img.pixels, cfg, rng))


# ---------------------------------------------------------------------------
# Named augmenters used by training and the CLI
# ---------------------------------------------------------------------------

AUGMENTER_NAMES = ("noisycutout", "spcutout", "none")
DISPLAY_NAMES = {"noisycutout": "NoisyCutout", "spcutout": "SPCutout", "none": "NoAug"}


@dataclass
class Augmenter:
    name: str = "noisycutout"
    noisy: NoisyCutoutConfig = field(default_factory=NoisyCutoutConfig)
    sp: SPCutoutConfig = field(default_factory=SPCutoutConfig)

    def __post_init__(self):
        if self.name not in AUGMENTER_NAMES:
            raise ConfigError(f"unknown augmenter {self.name!r}; choose from {AUGMENTER_NAMES}")

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self.name]

    def __call__(self, pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.name == "noisycutout":
            return noisy_cutout_pixels(pixels, self.noisy, rng)[0]
        if self.name == "spcutout":
            return sp_cutout_pixels(pixels, self.sp, rng)
        return pixels


def preview_grid(images: list[np.ndarray], augmenter: Augmenter, seed: int = 0, pad: int = 4) -> np.ndarray:
    """Two-row uint8 grid: originals on top, augmented copies underneath."""
    rng = np.random.default_rng(seed)
    top = [img for img in images]
    bottom = [augmenter(img, rng) for img in images]
    h, w = images[0].shape
    n = len(images)
    grid = np.full((2 * h + 3 * pad, n * w + (n + 1) * pad), 128, dtype=np.uint8)
    for i, (a, b) in enumerate(zip(top, bottom)):
        c = pad + i * (w + pad)
        grid[pad : pad + h, c : c + w] = a * 255
        grid[2 * pad + h : 2 * pad + 2 * h, c : c + w] = b * 255
    return grid
