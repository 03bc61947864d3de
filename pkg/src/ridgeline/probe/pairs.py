"""Genuine/imposter pair construction at a fixed class ratio.

Genuine pairs share an identity and differ in impression; imposter pairs
cross identities.  Pairs are unordered and never repeat.  The list is fully
determined by (manifest, split, ratio, seed).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from ..seeding import derive_seed
from ..synthdata.manifest import Manifest

PAIRSET_VERSION = 1
GENUINE_LABEL = 1
IMPOSTER_LABEL = 0

# per-identity cap on genuine pairs, so one prolific identity cannot dominate
GENUINE_CAP_PER_IDENTITY = 50


@dataclass(frozen=True)
class PairSample:
    a: str
    b: str
    label: int


@dataclass
class PairSet:
    source_digest: str
    seed: int
    ratio: float
    pairs: list[PairSample]
    version: int = PAIRSET_VERSION
    base_dir: Path = field(default_factory=Path, compare=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def abs_path(self, rel: str) -> Path:
        return self.base_dir / rel

    def genuine_count(self) -> int:
        return sum(1 for p in self.pairs if p.label == GENUINE_LABEL)

    def imposter_count(self) -> int:
        return sum(1 for p in self.pairs if p.label == IMPOSTER_LABEL)

    def image_paths(self) -> list[str]:
        """Unique image paths referenced by any pair, in first-seen order."""
        seen: dict[str, None] = {}
        for p in self.pairs:
            seen.setdefault(p.a)
            seen.setdefault(p.b)
        return list(seen)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "source_digest": self.source_digest,
            "seed": self.seed,
            "ratio": self.ratio,
            "pairs": [{"a": p.a, "b": p.b, "label": p.label} for p in self.pairs],
        }


def make_pairs(
    manifest: Manifest,
    split: str,
    ratio: float = 3.0,
    seed: int = 0,
    genuine_cap: int = GENUINE_CAP_PER_IDENTITY,
) -> PairSet:
    """Build genuine pairs (all within-identity impression pairs, capped per
    identity) and ratio-many imposter pairs sampled uniformly without
    replacement from the cross-identity pool."""
    if ratio <= 0:
        raise DataError(f"ratio must be positive, got {ratio}")
    records = manifest.for_split(split)
    by_identity: dict[int, list] = {}
    for r in records:
        by_identity.setdefault(r.identity_id, []).append(r)
    multi = [i for i, rs in sorted(by_identity.items()) if len(rs) >= 2]
    if len(by_identity) < 2 or len(multi) < 2:
        raise DataError(
            f"split {split!r} needs >= 2 identities with >= 2 impressions; "
            f"got {len(by_identity)} identities, {len(multi)} with multiple impressions"
        )

    rng = np.random.default_rng(derive_seed(seed, "pairs", split))

    genuine: list[PairSample] = []
    for identity in sorted(by_identity):
        rs = sorted(by_identity[identity], key=lambda r: r.impression_id)
        combos = list(itertools.combinations(rs, 2))
        if len(combos) > genuine_cap:
            keep = rng.choice(len(combos), size=genuine_cap, replace=False)
            combos = [combos[k] for k in sorted(keep)]
        genuine.extend(
            PairSample(a.degraded_path, b.degraded_path, GENUINE_LABEL) for a, b in combos
        )
    if not genuine:
        raise DataError(f"split {split!r} yields no genuine pairs")

    cross = [
        (a.degraded_path, b.degraded_path)
        for a, b in itertools.combinations(sorted(records, key=lambda r: (r.identity_id, r.impression_id)), 2)
        if a.identity_id != b.identity_id
    ]
    n_imposter = round(ratio * len(genuine))
    if n_imposter > len(cross):
        raise DataError(
            f"cannot draw {n_imposter} imposter pairs from {len(cross)} "
            f"cross-identity candidates in split {split!r}"
        )
    picked = rng.choice(len(cross), size=n_imposter, replace=False)
    imposters = [PairSample(cross[k][0], cross[k][1], IMPOSTER_LABEL) for k in sorted(picked)]

    return PairSet(
        source_digest=manifest.config_digest,
        seed=seed,
        ratio=ratio,
        pairs=genuine + imposters,
        base_dir=manifest.base_dir,
    )


def save_pairs(pairs: PairSet, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(pairs.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pairs(path: str | Path, base_dir: str | Path | None = None) -> PairSet:
    """Read a pair file.  ``base_dir`` is the image root the stored relative
    paths refer to (the manifest's directory); defaults to the pair file's."""
    path = Path(path)
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"pair file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError(f"pair file {path} must hold a JSON object")
    if raw.get("version") != PAIRSET_VERSION:
        raise FormatError(f"unsupported pair-set version {raw.get('version')!r}")
    for key in ("source_digest", "seed", "ratio", "pairs"):
        if key not in raw:
            raise FormatError(f"pair file missing {key!r}")
    pairs = [PairSample(p["a"], p["b"], int(p["label"])) for p in raw["pairs"]]
    for p in pairs:
        if p.label not in (GENUINE_LABEL, IMPOSTER_LABEL):
            raise FormatError(f"bad label {p.label} in pair file")
    return PairSet(
        source_digest=raw["source_digest"],
        seed=int(raw["seed"]),
        ratio=float(raw["ratio"]),
        pairs=pairs,
        base_dir=Path(base_dir) if base_dir is not None else path.parent,
    )
