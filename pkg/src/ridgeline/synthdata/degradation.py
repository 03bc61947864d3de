"""Capture-quality degradations applied to clean synthetic impressions.

Seven step kinds cover the phenomenology the verification literature cares
about: sensor noise (gaussian_noise), defocus (blur), low-pressure capture
(contrast_fade), dry skin with broken ridges (dry_erosion), wet skin with
merged ridges (wet_dilation), smudges and scars (blob_occlusion), and
placement wobble (affine_jitter).  A recipe is an ordered list of steps plus
a seed; applying the same recipe to the same image is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, maximum_filter, minimum_filter

from ..errors import ConfigError
from ..imaging import ensure_image

# documented parameter ranges, also the validation authority
PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "gaussian_noise": {"sigma": (0.0, 0.3)},
    "blur": {"sigma": (0.0, 3.0)},
    "contrast_fade": {"amount": (0.0, 1.0)},
    "dry_erosion": {"size": (0.0, 4.0), "patch_density": (0.0, 1.0)},
    "wet_dilation": {"size": (0.0, 4.0), "patch_density": (0.0, 1.0)},
    "blob_occlusion": {"count": (0.0, 12.0), "max_radius_frac": (0.02, 0.25)},
    "affine_jitter": {
        "max_rotation_deg": (0.0, 10.0),
        "max_translation_frac": (0.0, 0.05),
    },
}


@dataclass
class DegradationStep:
    kind: str
    params: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in PARAM_RANGES:
            raise ConfigError(
                f"unknown degradation kind {self.kind!r}; "
                f"expected one of {sorted(PARAM_RANGES)}"
            )
        ranges = PARAM_RANGES[self.kind]
        unknown = set(self.params) - set(ranges)
        if unknown:
            raise ConfigError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        missing = set(ranges) - set(self.params)
        if missing:
            raise ConfigError(f"{self.kind}: missing parameters {sorted(missing)}")
        for name, (lo, hi) in ranges.items():
            v = float(self.params[name])
            if not lo <= v <= hi:
                raise ConfigError(
                    f"{self.kind}.{name}={v} outside documented range [{lo}, {hi}]"
                )


@dataclass
class DegradationRecipe:
    steps: list[DegradationStep] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> None:
        for step in self.steps:
            step.validate()

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "steps": [{"kind": s.kind, "params": dict(s.params)} for s in self.steps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationRecipe":
        steps = [DegradationStep(s["kind"], dict(s["params"])) for s in d["steps"]]
        return cls(steps=steps, seed=int(d["seed"]))


def _patch_mask(
    shape: tuple[int, int], density: float, rng: np.random.Generator
) -> np.ndarray:
    """Smooth [0,1] mask covering roughly ``density`` of the image."""
    if density <= 0.0:
        return np.zeros(shape)
    noise = gaussian_filter(rng.standard_normal(shape), sigma=6.0)
    thresh = np.quantile(noise, 1.0 - density)
    width = 0.1 * (noise.max() - noise.min()) + 1e-12
    return np.clip((noise - thresh) / width, 0.0, 1.0)


def _soft_blobs(
    img: np.ndarray, count: int, max_radius_frac: float, rng: np.random.Generator
) -> np.ndarray:
    h, w = img.shape
    out = img.copy()
    rows, cols = np.mgrid[0:h, 0:w]
    for _ in range(count):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        radius = rng.uniform(2.0, max(2.0, max_radius_frac * min(h, w)))
        level = rng.uniform(0.0, 1.0)
        dist = np.hypot(rows - cy, cols - cx)
        m = np.clip((radius - dist) / (0.3 * radius), 0.0, 1.0)
        out = out * (1.0 - m) + level * m
    return out


def _affine_jitter(
    img: np.ndarray,
    max_rotation_deg: float,
    max_translation_frac: float,
    rng: np.random.Generator,
) -> np.ndarray:
    angle = rng.uniform(-max_rotation_deg, max_rotation_deg)
    h, w = img.shape
    ty = rng.uniform(-max_translation_frac, max_translation_frac) * h
    tx = rng.uniform(-max_translation_frac, max_translation_frac) * w
    theta = np.deg2rad(angle)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = rows - cy, cols - cx
    src_r = cy + np.cos(theta) * dy - np.sin(theta) * dx - ty
    src_c = cx + np.sin(theta) * dy + np.cos(theta) * dx - tx
    return map_coordinates(img, [src_r, src_c], order=1, mode="nearest")


def _apply_step(
    img: np.ndarray, step: DegradationStep, rng: np.random.Generator
) -> np.ndarray:
    p = step.params
    if step.kind == "gaussian_noise":
        return img + rng.normal(0.0, p["sigma"], size=img.shape)
    if step.kind == "blur":
        return gaussian_filter(img, sigma=p["sigma"])
    if step.kind == "contrast_fade":
        return img * (1.0 - p["amount"]) + 0.5 * p["amount"]
    if step.kind in ("dry_erosion", "wet_dilation"):
        size = 1 + int(round(p["size"]))
        if size <= 1:
            return img
        filt = maximum_filter if step.kind == "dry_erosion" else minimum_filter
        morphed = filt(img, size=size)
        mask = _patch_mask(img.shape, p["patch_density"], rng)
        return img * (1.0 - mask) + morphed * mask
    if step.kind == "blob_occlusion":
        return _soft_blobs(img, int(round(p["count"])), p["max_radius_frac"], rng)
    if step.kind == "affine_jitter":
        return _affine_jitter(
            img, p["max_rotation_deg"], p["max_translation_frac"], rng
        )
    raise ConfigError(f"unknown degradation kind {step.kind!r}")


def degrade(img: np.ndarray, recipe: DegradationRecipe) -> np.ndarray:
    """Apply ``recipe.steps`` in order, clipping back to [0, 1] at the end.
    All randomness flows from ``recipe.seed``."""
    img = ensure_image(img)
    recipe.validate()
    rng = np.random.default_rng(recipe.seed)
    out = img.copy()
    for step in recipe.steps:
        out = _apply_step(out, step, rng)
    return np.clip(out, 0.0, 1.0)


def random_recipe(
    seed: int,
    min_steps: int = 1,
    max_steps: int = 3,
    severity: tuple[float, float] = (0.25, 0.75),
    kinds: tuple[str, ...] | None = None,
) -> DegradationRecipe:
    """Draw a recipe with ``min_steps``..``max_steps`` distinct step kinds.

    Each parameter lands at a severity-scaled point inside its documented
    range, so recipes never validate out of bounds.  The recipe seed equals
    ``seed``, making the downstream degradation reproducible from one value.
    ``kinds`` restricts the menu (default: all seven).
    """
    menu = sorted(PARAM_RANGES) if kinds is None else sorted(kinds)
    unknown = set(menu) - set(PARAM_RANGES)
    if unknown:
        raise ConfigError(f"unknown degradation kinds {sorted(unknown)}")
    if not 1 <= min_steps <= max_steps <= len(menu):
        raise ConfigError(
            f"step count range ({min_steps}, {max_steps}) invalid for "
            f"{len(menu)} step kinds"
        )
    lo_sev, hi_sev = severity
    if not 0.0 <= lo_sev <= hi_sev <= 1.0:
        raise ConfigError(f"severity range {severity} must sit inside [0, 1]")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(min_steps, max_steps + 1))
    chosen = rng.choice(menu, size=n, replace=False)
    steps = []
    for kind in chosen:
        params = {}
        for name, (lo, hi) in PARAM_RANGES[kind].items():
            frac = rng.uniform(lo_sev, hi_sev)
            params[name] = lo + frac * (hi - lo)
        steps.append(DegradationStep(kind=str(kind), params=params))
    return DegradationRecipe(steps=steps, seed=seed)
