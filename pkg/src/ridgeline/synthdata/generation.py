"""Synthetic fingerprint construction.

A master print is grown by repeatedly filtering seeded noise with oriented
Gabor kernels that follow a smooth per-block orientation field, which is the
standard reaction-diffusion shortcut for ridge-like texture.  Impressions are
geometrically perturbed copies of a master print, standing in for repeated
captures of one finger.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from ..imaging import ensure_image, stretch_contrast
from ..seeding import derive_seed
from .gabor import oriented_bank_filter

DEFAULT_BLOCK_SIZE = 16
DEFAULT_FREQ = 0.1
# hard ceiling on the angle change between adjacent blocks, enforced by
# construction so downstream block estimators see a locally smooth field
MAX_BLOCK_STEP = np.pi / 5


def stripe_pattern(
    shape: tuple[int, int], theta: float, freq: float, phase: float = 0.0
) -> np.ndarray:
    """Ideal sinusoidal ridge pattern: constant along ``theta``, oscillating
    at ``freq`` cycles per pixel along the normal.  Range [0, 1]."""
    rows, cols = np.mgrid[0 : shape[0], 0 : shape[1]]
    arg = 2.0 * np.pi * freq * (rows * np.cos(theta) - cols * np.sin(theta))
    return 0.5 + 0.5 * np.cos(arg + phase)


def wrapped_angle_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest absolute difference between orientations, respecting the
    pi-periodicity of undirected angles.  Result in [0, pi/2]."""
    d = np.mod(np.asarray(a) - np.asarray(b), np.pi)
    return np.minimum(d, np.pi - d)


@dataclass
class OrientationField:
    """Per-block ridge orientations for one image.

    ``theta`` has shape (ceil(H / block_size), ceil(W / block_size)) with
    values in [0, pi).  ``image_shape`` records the pixel grid the field
    describes so it can be expanded back without guessing.
    """

    block_size: int
    theta: np.ndarray
    image_shape: tuple[int, int]

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        expect = (
            -(-self.image_shape[0] // self.block_size),
            -(-self.image_shape[1] // self.block_size),
        )
        if self.theta.shape != expect:
            raise ValueError(
                f"theta shape {self.theta.shape} does not tile image "
                f"{self.image_shape} with block {self.block_size}; want {expect}"
            )

    def pixel_map(self) -> np.ndarray:
        """Expand block angles to a full-resolution map by block replication."""
        full = np.repeat(
            np.repeat(self.theta, self.block_size, axis=0), self.block_size, axis=1
        )
        return full[: self.image_shape[0], : self.image_shape[1]]


def _smooth_variation(
    shape: tuple[int, int],
    block_size: int,
    rng: np.random.Generator,
    waviness: float,
) -> np.ndarray:
    """Sum of low-frequency cosine waves over block centers, rescaled so the
    worst block-to-block step stays under MAX_BLOCK_STEP."""
    nrows = -(-shape[0] // block_size)
    ncols = -(-shape[1] // block_size)
    cy = (np.arange(nrows)[:, None] + 0.5) * block_size / shape[0]
    cx = (np.arange(ncols)[None, :] + 0.5) * block_size / shape[1]
    field = np.zeros((nrows, ncols))
    for _ in range(int(rng.integers(2, 5))):
        amp = waviness * rng.uniform(0.2, 0.5)
        fu, fv = rng.uniform(-1.2, 1.2, size=2)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        field += amp * np.cos(2.0 * np.pi * (fu * cy + fv * cx) + ph)
    step = 0.0
    if nrows > 1:
        step = max(step, float(np.abs(np.diff(field, axis=0)).max()))
    if ncols > 1:
        step = max(step, float(np.abs(np.diff(field, axis=1)).max()))
    cap = 0.8 * MAX_BLOCK_STEP
    if step > cap:
        field *= cap / step
    return field


def gen_orientation_field(
    shape: tuple[int, int],
    block_size: int = DEFAULT_BLOCK_SIZE,
    seed: int = 0,
    waviness: float = 0.5,
    core_prob: float = 0.5,
) -> OrientationField:
    """Draw a smooth per-block orientation field.

    ``waviness`` scales the low-frequency angular variation; zero gives a
    constant field.  With probability ``core_prob`` a loop-type core
    singularity is planted away from the borders, around which the angle
    winds by half a turn.  Away from the core the block-to-block angle step
    is bounded by construction.
    """
    if block_size < 1:
        raise ValueError("block_size must be positive")
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, np.pi)
    field = base + _smooth_variation(shape, block_size, rng, waviness)
    core = rng.uniform() < core_prob
    if core:
        nrows, ncols = field.shape
        cy = rng.uniform(0.3, 0.7) * nrows
        cx = rng.uniform(0.3, 0.7) * ncols
        rows = np.arange(nrows)[:, None] + 0.5
        cols = np.arange(ncols)[None, :] + 0.5
        field = field + 0.5 * np.arctan2(rows - cy, cols - cx)
    return OrientationField(
        block_size=block_size,
        theta=np.mod(field, np.pi),
        image_shape=tuple(shape),
    )


def gen_master_print(
    field: OrientationField,
    freq: float = DEFAULT_FREQ,
    seed: int = 0,
    iterations: int = 5,
) -> np.ndarray:
    """Grow a ridge texture that follows ``field`` at ``freq`` cycles/pixel.

    Seeded white noise is alternately Gabor-filtered along the local
    orientation and renormalized; a handful of iterations locks the phase
    into continuous ridges.  Output is contrast-stretched to [0, 1].
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    shape = field.image_shape
    img = rng.standard_normal(shape)
    img = gaussian_filter(img, sigma=2.0)
    theta_map = field.pixel_map()
    for _ in range(iterations):
        img = oriented_bank_filter(img, theta_map, freq)
        sd = img.std()
        if sd < 1e-12:
            raise RuntimeError("ridge synthesis collapsed to a flat image")
        img = img / sd
    return stretch_contrast(img, low_pct=1.0, high_pct=99.0)


def rotate_image(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the image center with bilinear sampling, extending edge
    values outside the support."""
    img = ensure_image(img)
    theta = np.deg2rad(angle_deg)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = rows - cy, cols - cx
    src_r = cy + np.cos(theta) * dy - np.sin(theta) * dx
    src_c = cx + np.sin(theta) * dy + np.cos(theta) * dx
    out = map_coordinates(img, [src_r, src_c], order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def gen_impression(
    master: np.ndarray,
    identity_id: int = 0,
    impression_id: int = 0,
    seed: int = 0,
    max_rotation_deg: float = 2.0,
    max_translation_frac: float = 0.015,
    scale_range: tuple[float, float] = (0.99, 1.01),
    elastic_amplitude: float = 1.5,
    elastic_sigma: float = 8.0,
) -> np.ndarray:
    """One capture of ``master``: a random similarity transform plus a smooth
    elastic skin distortion, standing in for finger placement and skin
    stretch.  The sample seed is split from ``seed`` with the identity and
    impression ids, so every (identity, impression) slot draws its own
    parameters; degenerate parameter ranges reproduce the master exactly.

    Callers may widen the ranges up to rotation 15 degrees, translation 0.10
    of the side, and scale 0.95..1.05.  The defaults are much tighter: with
    ridge period near 10 px, a rotation of r degrees displaces edge pixels by
    about r * side / 115, and once that displacement approaches a quarter
    period, two impressions of one finger stop correlating and the genuine /
    imposter structure the verification task depends on washes out."""
    master = ensure_image(master)
    rng = np.random.default_rng(
        derive_seed(seed, "impression", identity_id, impression_id)
    )
    angle = rng.uniform(-max_rotation_deg, max_rotation_deg)
    h, w = master.shape
    ty = rng.uniform(-max_translation_frac, max_translation_frac) * h
    tx = rng.uniform(-max_translation_frac, max_translation_frac) * w
    scale = rng.uniform(*scale_range)
    if elastic_amplitude > 0.0:
        disp_r = gaussian_filter(rng.standard_normal((h, w)), elastic_sigma)
        disp_c = gaussian_filter(rng.standard_normal((h, w)), elastic_sigma)
        peak = max(np.abs(disp_r).max(), np.abs(disp_c).max(), 1e-12)
        disp_r *= elastic_amplitude / peak
        disp_c *= elastic_amplitude / peak
    else:
        disp_r = np.zeros((h, w))
        disp_c = np.zeros((h, w))
    if angle == 0.0 and ty == 0.0 and tx == 0.0 and scale == 1.0 and elastic_amplitude == 0.0:
        return master.copy()
    theta = np.deg2rad(angle)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = rows - cy, cols - cx
    # inverse mapping: output pixel -> source location in the master
    src_r = cy + (np.cos(theta) * dy - np.sin(theta) * dx) / scale - ty + disp_r
    src_c = cx + (np.sin(theta) * dy + np.cos(theta) * dx) / scale - tx + disp_c
    out = map_coordinates(master, [src_r, src_c], order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)
