"""Frozen-encoder verification probe.

The encoder is loaded from a checkpoint and never optimized; its bottleneck
features are extracted once and cached.  Only the projection head and the
pair classifier train, with a numerically stable sigmoid cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, ContractError, DataError
from ..imaging import load_image
from ..model.checkpoint import CheckpointMeta, load_into, params_digest, save_checkpoint
from ..model.heads import PairClassifier, ProjectionHead
from ..model.unet import UNetConfig, UNetEncoder, initialize_parameters
from ..pretrain.loop import EarlyStopper, TrainLogger, batch_indices
from ..seeding import derive_seed
from .pairs import PairSet


@dataclass
class ProbeConfig:
    epochs: int = 30
    early_stop_patience: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    random_pair_swap: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")


def loss_bce(logit: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """Mean sigmoid cross-entropy in the overflow-safe form
    max(l,0) - l*y + log(1 + exp(-|l|))."""
    if logit.shape != label.shape:
        raise ContractError(f"shape mismatch: {tuple(logit.shape)} vs {tuple(label.shape)}")
    label = label.to(logit.dtype)
    per = torch.clamp(logit, min=0) - logit * label + torch.log1p(torch.exp(-logit.abs()))
    return per.mean()


def load_frozen_encoder(model_cfg: UNetConfig, encoder_ckpt: str | Path) -> UNetEncoder:
    encoder = UNetEncoder(model_cfg)
    load_into(encoder, encoder_ckpt, expect_component="encoder")
    encoder.eval()
    for p in encoder.parameters():
        p.requires_grad_(False)
    return encoder


def extract_features(
    encoder: UNetEncoder,
    paths: list[str],
    base_dir: Path,
    batch_size: int = 32,
) -> dict[str, torch.Tensor]:
    """Bottleneck features for each image path, keyed by the path string."""
    features: dict[str, torch.Tensor] = {}
    with torch.no_grad():
        for start in range(0, len(paths), batch_size):
            chunk = paths[start : start + batch_size]
            imgs = np.stack([load_image(base_dir / p) for p in chunk])
            x = torch.from_numpy(imgs).float().unsqueeze(1)
            feats = encoder(x)
            for p, f in zip(chunk, feats):
                features[p] = f.clone()
    return features


def _pair_tensors(
    pairs: PairSet, features: dict[str, torch.Tensor]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    fa = torch.stack([features[p.a] for p in pairs.pairs])
    fb = torch.stack([features[p.b] for p in pairs.pairs])
    labels = torch.tensor([float(p.label) for p in pairs.pairs])
    return fa, fb, labels


def _batch_accuracy(logits: torch.Tensor, labels: torch.Tensor) -> float:
    pred = (logits >= 0).float()
    return float((pred == labels).float().mean())


def train_verifier(
    model_cfg: UNetConfig,
    encoder_ckpt: str | Path,
    pairs: PairSet,
    config: ProbeConfig,
    out_dir: str | Path,
    val_pairs: PairSet | None = None,
    log_name: str = "probe_log.jsonl",
) -> dict:
    """Train projection + classifier on cached frozen-encoder features.

    The encoder's parameter digest is asserted unchanged by training.  With
    ``random_pair_swap`` each pair is presented in a random order every
    epoch, so the classifier cannot latch onto slot identity.
    """
    model_cfg.validate()
    config.validate()
    if not pairs.pairs:
        raise DataError("pair set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    encoder = load_frozen_encoder(model_cfg, encoder_ckpt)
    digest_before = params_digest(encoder.state_dict())

    all_paths = pairs.image_paths()
    if val_pairs is not None:
        seen = set(all_paths)
        all_paths += [p for p in val_pairs.image_paths() if p not in seen]
    features = extract_features(encoder, all_paths, pairs.base_dir, config.batch_size)

    projection = ProjectionHead()
    classifier = PairClassifier()
    initialize_parameters(projection, derive_seed(config.seed, "proj_init"))
    initialize_parameters(classifier, derive_seed(config.seed, "cls_init"))

    optimizer = torch.optim.Adam(
        list(projection.parameters()) + list(classifier.parameters()),
        lr=config.learning_rate,
    )
    logger = TrainLogger(out_dir / log_name)
    stopper = EarlyStopper(config.early_stop_patience)
    rng = np.random.default_rng(derive_seed(config.seed, "order"))

    fa, fb, labels = _pair_tensors(pairs, features)
    if val_pairs is not None:
        va, vb, vlabels = _pair_tensors(val_pairs, features)

    step = 0
    best_state = None
    train_acc = 0.0
    for epoch in range(config.epochs):
        projection.train()
        classifier.train()
        epoch_correct = 0
        for idx in batch_indices(len(labels), config.batch_size, rng):
            a = fa[idx]
            b = fb[idx]
            if config.random_pair_swap:
                swap = torch.from_numpy(rng.random(len(idx)) < 0.5)
                a = torch.where(swap.unsqueeze(1), fb[idx], fa[idx])
                b = torch.where(swap.unsqueeze(1), fa[idx], fb[idx])
            y = labels[idx]
            optimizer.zero_grad()
            logits = classifier(projection(a), projection(b))
            loss = loss_bce(logits, y)
            loss.backward()
            optimizer.step()
            step += 1
            acc = _batch_accuracy(logits.detach(), y)
            epoch_correct += acc * len(idx)
            logger.log(step, "train", loss.item(), config.learning_rate, epoch=epoch, acc=acc)
        train_acc = epoch_correct / len(labels)

        projection.eval()
        classifier.eval()
        if val_pairs is not None:
            with torch.no_grad():
                vlogits = classifier(projection(va), projection(vb))
                vloss = loss_bce(vlogits, vlabels).item()
                vacc = _batch_accuracy(vlogits, vlabels)
            logger.log(step, "val", vloss, config.learning_rate, epoch=epoch, acc=vacc)
            monitored = vloss
        else:
            monitored = logger.losses("train")[-1]

        improved = stopper.update(monitored)
        # without a validation set, keep the final state instead of an
        # early snapshot chosen by noisy train-batch loss
        if improved or val_pairs is None:
            best_state = {
                "projection": {k: v.detach().clone() for k, v in projection.state_dict().items()},
                "classifier": {k: v.detach().clone() for k, v in classifier.state_dict().items()},
                "step": step,
            }
        if val_pairs is not None and stopper.should_stop:
            break

    if best_state is None:
        raise RuntimeError("no training epoch completed")

    digest_after = params_digest(encoder.state_dict())
    if digest_after != digest_before:
        raise ContractError("frozen encoder changed during probing")

    proj_path = out_dir / "projection.ckpt"
    cls_path = out_dir / "classifier.ckpt"
    extra = {"encoder_digest": digest_before}
    for component, path, key in (
        ("projection", proj_path, "projection"),
        ("classifier", cls_path, "classifier"),
    ):
        meta = CheckpointMeta(
            component=component,
            config_digest=pairs.source_digest,
            step=best_state["step"],
            seed=config.seed,
            extra=extra,
        )
        save_checkpoint(best_state[key], meta, path)

    return {
        "epochs_run": epoch + 1,
        "train_accuracy": train_acc,
        "best_monitored_loss": stopper.best,
        "encoder_digest": digest_before,
        "projection_path": str(proj_path),
        "classifier_path": str(cls_path),
        "log_path": str(logger.path),
    }


class Embedder:
    """Loads encoder + projection once and maps images to 512-d embeddings."""

    def __init__(
        self,
        model_cfg: UNetConfig,
        encoder_ckpt: str | Path,
        projection_ckpt: str | Path,
    ):
        self.encoder = load_frozen_encoder(model_cfg, encoder_ckpt)
        self.projection = ProjectionHead()
        load_into(self.projection, projection_ckpt, expect_component="projection")
        self.projection.eval()

    def __call__(self, images: np.ndarray) -> np.ndarray:
        single = images.ndim == 2
        if single:
            images = images[None]
        x = torch.from_numpy(np.ascontiguousarray(images)).float().unsqueeze(1)
        with torch.no_grad():
            z = self.projection(self.encoder(x)).numpy()
        return z[0] if single else z


def embed(
    model_cfg: UNetConfig,
    encoder_ckpt: str | Path,
    projection_ckpt: str | Path,
    img: np.ndarray,
) -> np.ndarray:
    """One-shot convenience wrapper around Embedder for a single image."""
    return Embedder(model_cfg, encoder_ckpt, projection_ckpt)(img)
