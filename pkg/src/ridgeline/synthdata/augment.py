"""Stochastic view augmentation for the contrastive pretraining methods.

One image in, one randomized view out.  Every transform draws its parameters
from the seed-derived stream whether or not it fires, so toggling one
probability never shifts the randomness of the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from ..errors import ConfigError
from ..imaging import ensure_image
from .generation import rotate_image


@dataclass
class AugmentPolicy:
    """Per-transform probabilities and parameter ranges."""

    p_rotate: float = 0.5
    max_rotation_deg: float = 30.0
    p_crop: float = 0.8
    crop_scale: tuple[float, float] = (0.6, 1.0)
    p_jitter: float = 0.8
    brightness: float = 0.2
    contrast: float = 0.2
    p_blur: float = 0.5
    blur_sigma: tuple[float, float] = (0.1, 2.0)

    def validate(self) -> None:
        for name in ("p_rotate", "p_crop", "p_jitter", "p_blur"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} must lie in [0, 1]")
        if not 0.0 < self.crop_scale[0] <= self.crop_scale[1] <= 1.0:
            raise ConfigError(f"crop_scale {self.crop_scale} must sit inside (0, 1]")
        if not 0.0 <= self.blur_sigma[0] <= self.blur_sigma[1]:
            raise ConfigError(f"blur_sigma {self.blur_sigma} must be ordered and >= 0")
        if self.max_rotation_deg < 0:
            raise ConfigError("max_rotation_deg must be >= 0")


def _resized_crop(
    img: np.ndarray, area_scale: float, top_frac: float, left_frac: float
) -> np.ndarray:
    """Crop a square patch covering ``area_scale`` of the area, then resize
    back to the source shape with bilinear sampling."""
    h, w = img.shape
    side_frac = float(np.sqrt(area_scale))
    ch = max(2, int(round(side_frac * h)))
    cw = max(2, int(round(side_frac * w)))
    top = int(round(top_frac * (h - ch)))
    left = int(round(left_frac * (w - cw)))
    rows = top + np.linspace(0.0, ch - 1.0, h)
    cols = left + np.linspace(0.0, cw - 1.0, w)
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(img, [grid_r, grid_c], order=1, mode="nearest")


def augment_view(img: np.ndarray, policy: AugmentPolicy, seed: int) -> np.ndarray:
    """One stochastic view: rotation, resized crop, brightness/contrast
    jitter, and Gaussian blur, each gated by its policy probability.  With
    every probability at zero the input comes back untouched."""
    img = ensure_image(img)
    policy.validate()
    rng = np.random.default_rng(seed)
    out = img

    gate = rng.uniform()
    angle = rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg)
    if gate < policy.p_rotate:
        out = rotate_image(out, angle)

    gate = rng.uniform()
    area = rng.uniform(*policy.crop_scale)
    top_frac, left_frac = rng.uniform(size=2)
    if gate < policy.p_crop:
        out = _resized_crop(out, area, top_frac, left_frac)

    gate = rng.uniform()
    shift = rng.uniform(-policy.brightness, policy.brightness)
    gain = rng.uniform(1.0 - policy.contrast, 1.0 + policy.contrast)
    if gate < policy.p_jitter:
        out = (out - 0.5) * gain + 0.5 + shift

    gate = rng.uniform()
    sigma = rng.uniform(*policy.blur_sigma)
    if gate < policy.p_blur:
        out = gaussian_filter(out, sigma=sigma)

    if out is img:
        return img.copy()
    return np.clip(out, 0.0, 1.0)
