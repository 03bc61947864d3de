"""Turning trained checkpoints + pair lists into ScoreSets.

Classifier mode squashes the order-symmetrized logit through a sigmoid;
cosine mode compares projection embeddings directly.  Either way each image
is embedded exactly once.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError
from ..imaging import load_image
from ..model.checkpoint import load_into
from ..model.heads import PairClassifier
from ..model.unet import UNetConfig
from ..probe.pairs import PairSet
from ..probe.verifier import Embedder
from .metrics import ScoreSet


def _embed_all(
    embedder: Embedder, pairs: PairSet, batch_size: int
) -> dict[str, np.ndarray]:
    paths = pairs.image_paths()
    out: dict[str, np.ndarray] = {}
    for start in range(0, len(paths), batch_size):
        chunk = paths[start : start + batch_size]
        imgs = np.stack([load_image(pairs.abs_path(p)) for p in chunk])
        z = embedder(imgs)
        for p, row in zip(chunk, z):
            out[p] = row
    return out


def score_pairs(
    pairs: PairSet,
    mode: str,
    model_cfg: UNetConfig,
    encoder_ckpt: str | Path,
    projection_ckpt: str | Path,
    classifier_ckpt: str | Path | None = None,
    batch_size: int = 32,
) -> ScoreSet:
    if mode == "classifier" and classifier_ckpt is None:
        raise ConfigError("classifier mode needs a classifier checkpoint")
    if mode not in ("classifier", "cosine"):
        raise ConfigError(f"mode must be 'classifier' or 'cosine', got {mode!r}")

    embedder = Embedder(model_cfg, encoder_ckpt, projection_ckpt)
    embeddings = _embed_all(embedder, pairs, batch_size)
    labels = np.array([p.label for p in pairs.pairs], dtype=np.int64)

    ua = np.stack([embeddings[p.a] for p in pairs.pairs])
    ub = np.stack([embeddings[p.b] for p in pairs.pairs])

    if mode == "cosine":
        na = np.linalg.norm(ua, axis=1)
        nb = np.linalg.norm(ub, axis=1)
        cos = (ua * ub).sum(axis=1) / (na * nb)
        return ScoreSet(np.clip(cos, -1.0, 1.0), labels, mode="cosine")

    classifier = PairClassifier()
    load_into(classifier, classifier_ckpt, expect_component="classifier")
    classifier.eval()
    scores = np.empty(len(pairs), dtype=np.float64)
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            u = torch.from_numpy(ua[start : start + batch_size]).float()
            v = torch.from_numpy(ub[start : start + batch_size]).float()
            logit = (classifier(u, v) + classifier(v, u)) / 2.0
            scores[start : start + batch_size] = torch.sigmoid(logit).numpy()
    return ScoreSet(scores, labels, mode="classifier_prob")
