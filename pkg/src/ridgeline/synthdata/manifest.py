"""Dataset assembly: render identities to disk and describe them in a
versioned JSON manifest.

The manifest is the only contract between generation and the training
stages, so external datasets can be dropped in by writing the same record
schema; nothing downstream knows whether the pixels are synthetic.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, FormatError
from ..imaging import save_image
from ..seeding import config_digest, derive_seed
from .classical import classical_enhance
from .degradation import degrade, random_recipe
from .generation import gen_impression, gen_master_print, gen_orientation_field

MANIFEST_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class SampleRecord:
    identity_id: int
    impression_id: int
    degraded_path: str
    target_path: str
    split: str


@dataclass
class Manifest:
    config_digest: str
    records: list[SampleRecord] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    base_dir: Path | None = None  # set on save/load, never serialized

    def for_split(self, split: str) -> list[SampleRecord]:
        if split not in SPLIT_NAMES:
            raise ConfigError(f"unknown split {split!r}; expected one of {SPLIT_NAMES}")
        return [r for r in self.records if r.split == split]

    def abs_path(self, rel: str) -> Path:
        if self.base_dir is None:
            raise DataError("manifest has no base directory; save or load it first")
        return self.base_dir / rel

    def identity_ids(self) -> list[int]:
        return sorted({r.identity_id for r in self.records})


def split_counts(n: int, fractions: tuple[float, ...]) -> tuple[int, ...]:
    """Largest-remainder apportionment of ``n`` items across fractions.

    Quotas are floored, then leftover units go to the largest fractional
    remainders; ties resolve toward the earlier split so train absorbs
    rounding before val before test.
    """
    if n < 0:
        raise ConfigError("cannot split a negative count")
    fr = [float(f) for f in fractions]
    if any(f < 0 for f in fr):
        raise ConfigError(f"split fractions must be non-negative, got {fractions}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    quotas = [n * f for f in fr]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(fr)), key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[:leftover]:
        counts[k] += 1
    return tuple(counts)


def assign_identity_splits(
    identity_ids: list[int], fractions: tuple[float, float, float]
) -> dict[int, str]:
    """Split at the identity level so no finger leaks across splits."""
    counts = split_counts(len(identity_ids), fractions)
    ordered = sorted(identity_ids)
    out: dict[int, str] = {}
    pos = 0
    for name, count in zip(SPLIT_NAMES, counts):
        for ident in ordered[pos : pos + count]:
            out[ident] = name
        pos += count
    return out


@dataclass
class GenerationConfig:
    n_identities: int = 10
    impressions_per_identity: int = 4
    image_size: int = 128
    block_size: int = 16
    freq_range: tuple[float, float] = (0.08, 0.125)
    waviness: float = 0.5
    core_prob: float = 0.5
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    target_kind: str = "classical"  # "classical" enhances targets, "clean" keeps them raw
    degrade_steps: tuple[int, int] = (1, 3)
    degrade_severity: tuple[float, float] = (0.25, 0.75)
    degrade_kinds: tuple[str, ...] = ()  # empty = the full step menu
    seed: int = 0

    def validate(self) -> None:
        if self.n_identities < 1 or self.impressions_per_identity < 1:
            raise ConfigError("need at least one identity and one impression")
        if self.image_size < 64:
            raise ConfigError(f"image_size must be >= 64, got {self.image_size}")
        if not 8 <= self.block_size <= 32:
            raise ConfigError(f"block_size must lie in [8, 32], got {self.block_size}")
        if self.target_kind not in ("classical", "clean"):
            raise ConfigError(f"target_kind must be classical or clean, got {self.target_kind!r}")
        lo, hi = self.freq_range
        if not 1.0 / 25.0 < lo <= hi < 1.0 / 3.0:
            raise ConfigError(f"freq_range {self.freq_range} outside the plausible ridge band")
        split_counts(1, self.split_fractions)  # validates the fractions
        # surface recipe-menu mistakes here rather than inside a render worker
        random_recipe(
            0,
            min_steps=self.degrade_steps[0],
            max_steps=self.degrade_steps[1],
            severity=self.degrade_severity,
            kinds=self.degrade_kinds or None,
        )

    def digest(self) -> str:
        return config_digest(asdict(self))


def _render_identity(
    config: GenerationConfig, identity_id: int, split: str
) -> list[tuple[SampleRecord, np.ndarray, np.ndarray]]:
    """All impressions for one identity: (record, degraded, target) triples.
    Pure function of (config, identity_id), safe to run in a worker."""
    size = (config.image_size, config.image_size)
    orient = gen_orientation_field(
        size,
        block_size=config.block_size,
        seed=derive_seed(config.seed, "field", identity_id),
        waviness=config.waviness,
        core_prob=config.core_prob,
    )
    freq_rng = np.random.default_rng(derive_seed(config.seed, "freq", identity_id))
    freq = float(freq_rng.uniform(*config.freq_range))
    master = gen_master_print(
        orient, freq=freq, seed=derive_seed(config.seed, "master", identity_id)
    )
    out = []
    for imp in range(config.impressions_per_identity):
        clean = gen_impression(master, identity_id, imp, seed=config.seed)
        if config.target_kind == "classical":
            target = classical_enhance(clean, block_size=config.block_size)
        else:
            target = clean
        recipe = random_recipe(
            derive_seed(config.seed, "degrade", identity_id, imp),
            min_steps=config.degrade_steps[0],
            max_steps=config.degrade_steps[1],
            severity=config.degrade_severity,
            kinds=config.degrade_kinds or None,
        )
        degraded = degrade(clean, recipe)
        stem = f"id{identity_id:04d}_imp{imp:02d}"
        record = SampleRecord(
            identity_id=identity_id,
            impression_id=imp,
            degraded_path=f"images/{stem}_degraded.png",
            target_path=f"images/{stem}_target.png",
            split=split,
        )
        out.append((record, degraded, target))
    return out


def build_dataset(config: GenerationConfig, out_dir: str | Path, workers: int = 1) -> Manifest:
    """Render every (identity, impression) pair and write the manifest.

    Identity rendering is a pure function of (config, identity), so it can
    fan out across processes; all writes happen in the parent, in identity
    order, keeping the output byte-stable regardless of worker count.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    identity_ids = list(range(config.n_identities))
    splits = assign_identity_splits(identity_ids, config.split_fractions)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rendered = list(
                pool.map(
                    _render_identity,
                    [config] * len(identity_ids),
                    identity_ids,
                    [splits[i] for i in identity_ids],
                )
            )
    else:
        rendered = [_render_identity(config, i, splits[i]) for i in identity_ids]
    records = []
    for triples in rendered:
        for record, degraded, target in triples:
            save_image(degraded, out_dir / record.degraded_path)
            save_image(target, out_dir / record.target_path)
            records.append(record)
    manifest = Manifest(config_digest=config.digest(), records=records)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def _check_unique(records: list[SampleRecord]) -> None:
    seen = set()
    for r in records:
        key = (r.identity_id, r.impression_id)
        if key in seen:
            raise DataError(f"duplicate (identity, impression) key {key} in manifest")
        seen.add(key)


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    path = Path(path)
    _check_unique(manifest.records)
    for r in manifest.records:
        if r.split not in SPLIT_NAMES:
            raise DataError(f"record ({r.identity_id}, {r.impression_id}) has bad split {r.split!r}")
    payload = {
        "version": manifest.version,
        "config_digest": manifest.config_digest,
        "records": [asdict(r) for r in manifest.records],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    manifest.base_dir = path.parent
    return path


def load_manifest(path: str | Path, validate_files: bool = True) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    if payload.get("version") != MANIFEST_VERSION:
        raise FormatError(
            f"manifest version {payload.get('version')!r} unsupported; "
            f"expected {MANIFEST_VERSION}"
        )
    try:
        records = [SampleRecord(**r) for r in payload["records"]]
        digest = payload["config_digest"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"manifest {path} is missing required fields: {exc}") from exc
    _check_unique(records)
    manifest = Manifest(config_digest=digest, records=records, base_dir=path.parent)
    if validate_files:
        for r in records:
            for rel in (r.degraded_path, r.target_path):
                if not (path.parent / rel).exists():
                    raise DataError(f"manifest references missing file: {path.parent / rel}")
    return manifest
