"""Deterministic seed derivation and config digests.

Every random decision in the pipeline is keyed by a seed derived from the
run's root seed with :func:`derive_seed`. The splitting rule is part of the
public contract so that independent runs (and parallel workers) agree:

    derive_seed(root_seed, *parts) = first 8 little-endian bytes of
        sha256("{root_seed}" + chr(0x1f) + "{part}" ... )  mod 2**63

Conventional keys used by the stages:

    derive_seed(root, "identity", identity_id)               master print
    derive_seed(root, "impression", identity_id, impression_id)
    derive_seed(root, "degrade", identity_id, impression_id)
    derive_seed(root, "view", epoch, sample_index, view_index)
    derive_seed(root, stage_name)                            stage-level rng
"""

from __future__ import annotations

import hashlib
import json


def derive_seed(root_seed: int, *parts) -> int:
    """Derive a child seed from ``root_seed`` and a key path."""
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "little") % 2**63


def canonical_json(obj) -> str:
    """Serialize ``obj`` with sorted keys and no whitespace variance."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj) -> str:
    """Hex sha256 of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()
