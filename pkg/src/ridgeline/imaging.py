"""Grayscale image container conventions, raster I/O, and quality metrics.

An image is a 2-D ``float64`` numpy array in ``[0, 1]``, row-major
(``img[row, col]``). All public operations keep values finite and inside the
unit range. RMSE and PSNR are reported on the 0-255 intensity scale so they
are comparable with the usual 8-bit numbers; SSIM uses the unit dynamic
range.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.signal import fftconvolve

from .errors import ContractError, DegenerateInputError, FormatError

#: Minimum side length accepted at pipeline entry points.
MIN_PIPELINE_SIDE = 32

#: PSNR reported for a zero-error pair instead of infinity.
PSNR_CAP_DB = 100.0

# SSIM constants (Wang et al. reference values, unit dynamic range).
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11x11 window


def ensure_image(img: np.ndarray, min_side: int | None = None) -> np.ndarray:
    """Validate an image array and return it as float64.

    Raises ContractError on wrong rank, non-finite values, or values outside
    [0, 1]; ``min_side`` additionally enforces a minimum height/width.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"expected a 2-D grayscale array, got shape {arr.shape}")
    if arr.size == 0:
        raise ContractError("empty image")
    if not np.all(np.isfinite(arr)):
        raise ContractError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ContractError(
            f"image values outside [0, 1]: min={arr.min():.4g} max={arr.max():.4g}"
        )
    if min_side is not None and min(arr.shape) < min_side:
        raise ContractError(f"image sides must be >= {min_side}, got {arr.shape}")
    return arr


def _require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")


def load_image(path) -> np.ndarray:
    """Load an 8/16-bit grayscale or RGB raster, rescaled to [0, 1].

    PNG and PGM (P5) are the supported on-disk formats; RGB inputs are
    collapsed by averaging the three channels.
    """
    with Image.open(path) as im:
        if im.width == 0 or im.height == 0:
            raise FormatError(f"zero-sized image: {path}")
        mode = im.mode
        if mode in ("RGB", "RGBA"):
            arr = np.asarray(im, dtype=np.float64)[..., :3].mean(axis=2) / 255.0
        elif mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif mode in ("I", "I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return np.clip(arr, 0.0, 1.0)


def save_image(img: np.ndarray, path) -> None:
    """Write an image as 8-bit grayscale PNG.

    Quantization bounds the save/load round-trip error by 1/255 per pixel.
    """
    arr = ensure_image(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantized = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path, format="PNG")


def _gaussian_kernel_1d(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Per window: ((2*mu_a*mu_b + C1) * (2*cov_ab + C2)) /
    ((mu_a^2 + mu_b^2 + C1) * (var_a + var_b + C2)), averaged over all fully
    interior windows; C1 = (0.01*L)^2, C2 = (0.03*L)^2 with L = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_same_shape(a, b)
    if min(a.shape) < 2 * _SSIM_RADIUS + 1:
        raise ContractError(
            f"images must be at least {2 * _SSIM_RADIUS + 1} pixels per side for SSIM"
        )

    k1 = _gaussian_kernel_1d(_SSIM_SIGMA, _SSIM_RADIUS)
    window = np.outer(k1, k1)

    def wmean(x: np.ndarray) -> np.ndarray:
        # valid-mode convolution == windowed mean on the interior region,
        # identical to filter-then-crop without any boundary handling
        return fftconvolve(x, window, mode="valid")

    mu_a = wmean(a)
    mu_b = wmean(b)
    var_a = wmean(a * a) - mu_a * mu_a
    var_b = wmean(b * b) - mu_b * mu_b
    cov = wmean(a * b) - mu_a * mu_b

    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean squared error on the 0-255 intensity scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_same_shape(a, b)
    diff = 255.0 * a - 255.0 * b
    return float(np.sqrt(np.mean(diff * diff)))


def psnr(a: np.ndarray, b: np.ndarray, cap_db: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB: 20*log10(255 / rmse).

    A zero-error pair returns ``cap_db`` instead of infinity so reports stay
    JSON-representable.
    """
    err = rmse(a, b)
    if err == 0.0:
        return cap_db
    return 20.0 * math.log10(255.0 / err)


def normalize_mean_var(
    img: np.ndarray,
    target_mean: float = 0.5,
    target_var: float = 0.04,
    clip: bool = True,
) -> np.ndarray:
    """Classical mean/variance normalization.

    Pixels above the image mean are pushed up from ``target_mean`` by
    sqrt(target_var * (I - M)^2 / V), pixels below are pushed down, which
    lands the pre-clip output exactly at the target mean and variance.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ContractError(f"expected a non-empty 2-D array, got shape {arr.shape}")
    mean = arr.mean()
    var = arr.var()
    # constant arrays can carry ~1e-34 of accumulation noise, still flat
    if var <= 1e-20:
        raise DegenerateInputError("zero-variance image cannot be normalized")
    magnitude = np.sqrt(target_var * (arr - mean) ** 2 / var)
    out = np.where(arr > mean, target_mean + magnitude, target_mean - magnitude)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out


def stretch_contrast(img: np.ndarray, low_pct: float = 1.0, high_pct: float = 99.0) -> np.ndarray:
    """Linearly map the [low, high] percentile range onto [0, 1] and clip."""
    arr = np.asarray(img, dtype=np.float64)
    lo, hi = np.percentile(arr, [low_pct, high_pct])
    if hi - lo <= 0:
        return np.full_like(arr, 0.5)
    return np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
