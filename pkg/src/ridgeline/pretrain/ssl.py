"""Self-supervised baselines on the shared encoder: SimCLR, MoCo, BYOL,
SimSiam.  Each trains encoder + method head on two augmented views per image
and exports an encoder-only checkpoint compatible with the probe stage."""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, DataError
from ..imaging import load_image
from ..model.checkpoint import CheckpointMeta, save_checkpoint
from ..model.heads import EMBED_DIM, SSLPredictor, SSLProjector
from ..model.unet import UNetConfig, UNetEncoder, initialize_parameters
from ..seeding import derive_seed
from ..synthdata.augment import AugmentPolicy, augment_view
from ..synthdata.manifest import Manifest
from .loop import PretrainConfig, EarlyStopper, TrainLogger, batch_indices
from .losses import (
    byol_ema_update,
    loss_byol,
    loss_infonce_queue,
    loss_ntxent,
    loss_simsiam,
)

SSL_METHODS = ("simclr", "moco", "byol", "simsiam")


def _load_split_images(manifest: Manifest, split: str) -> list[np.ndarray]:
    records = manifest.for_split(split)
    if not records:
        raise DataError(f"manifest has no records in the {split!r} split")
    return [load_image(manifest.abs_path(r.degraded_path)) for r in records]


def _views_to_tensor(views: list[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(views)).float().unsqueeze(1)


def _fixed_val_views(
    images: list[np.ndarray], policy: AugmentPolicy, seed: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Validation views are drawn once with epoch-independent seeds so the
    early-stopping signal is not noise from re-augmentation."""
    v1 = [augment_view(im, policy, derive_seed(seed, "val_view", i, 0)) for i, im in enumerate(images)]
    v2 = [augment_view(im, policy, derive_seed(seed, "val_view", i, 1)) for i, im in enumerate(images)]
    return _views_to_tensor(v1), _views_to_tensor(v2)


class _MethodState:
    """Everything one SSL method needs beyond the online encoder/projector."""

    def __init__(self, method: str, model_cfg: UNetConfig, config: PretrainConfig):
        self.method = method
        self.momentum = config.resolved_momentum()
        self.predictor = None
        self.target_encoder = None
        self.target_projector = None
        self.queue = None
        seed = config.seed

        if method in ("byol", "simsiam"):
            self.predictor = SSLPredictor()
            initialize_parameters(self.predictor, derive_seed(seed, "pred"))

        if method in ("moco", "byol"):
            # target/key twins start as exact copies and never receive gradients
            self.target_encoder = UNetEncoder(model_cfg)
            self.target_projector = SSLProjector()
            for p in self.target_encoder.parameters():
                p.requires_grad_(False)
            for p in self.target_projector.parameters():
                p.requires_grad_(False)

        if method == "moco":
            gen = torch.Generator().manual_seed(derive_seed(seed, "queue"))
            q = torch.randn(config.queue_size, EMBED_DIM, generator=gen)
            self.queue = torch.nn.functional.normalize(q, dim=1)

    def sync_targets(self, encoder, projector) -> None:
        if self.target_encoder is not None:
            self.target_encoder.load_state_dict(copy.deepcopy(encoder.state_dict()))
            self.target_projector.load_state_dict(copy.deepcopy(projector.state_dict()))

    def ema_step(self, encoder, projector) -> None:
        if self.target_encoder is not None:
            byol_ema_update(encoder, self.target_encoder, self.momentum)
            byol_ema_update(projector, self.target_projector, self.momentum)

    def enqueue(self, keys: torch.Tensor) -> None:
        """Prepend this batch's keys and drop the oldest entries at the tail,
        keeping the queue length fixed."""
        keys = torch.nn.functional.normalize(keys.detach(), dim=1)
        capacity = self.queue.shape[0]
        self.queue = torch.cat([keys, self.queue], dim=0)[:capacity]

    def trainable_modules(self):
        return [m for m in (self.predictor,) if m is not None]


def _method_loss(
    method: str,
    state: _MethodState,
    encoder,
    projector,
    x1: torch.Tensor,
    x2: torch.Tensor,
    config: PretrainConfig,
) -> torch.Tensor:
    if method == "simclr":
        z = projector(torch.cat([encoder(x1), encoder(x2)], dim=0))
        return loss_ntxent(z, temperature=config.temperature)
    if method == "moco":
        q = projector(encoder(x1))
        with torch.no_grad():
            k = state.target_projector(state.target_encoder(x2))
        return loss_infonce_queue(q, k, state.queue, temperature=config.temperature)
    if method == "byol":
        p1 = state.predictor(projector(encoder(x1)))
        p2 = state.predictor(projector(encoder(x2)))
        with torch.no_grad():
            t1 = state.target_projector(state.target_encoder(x1))
            t2 = state.target_projector(state.target_encoder(x2))
        return loss_byol(torch.cat([p1, p2], dim=0), torch.cat([t2, t1], dim=0))
    if method == "simsiam":
        z1 = projector(encoder(x1))
        z2 = projector(encoder(x2))
        p1 = state.predictor(z1)
        p2 = state.predictor(z2)
        return loss_simsiam(p1, p2, z1, z2)
    raise ConfigError(f"unknown ssl method {method!r}")


def _moco_keys(state: _MethodState, x2: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return state.target_projector(state.target_encoder(x2))


def _projection_std(encoder, projector, x: torch.Tensor, batch_size: int) -> np.ndarray:
    """Per-dimension std of the L2-normalized projections; near-zero values
    everywhere mean the representation has collapsed to a point."""
    zs = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            z = projector(encoder(x[start : start + batch_size]))
            zs.append(torch.nn.functional.normalize(z, dim=1))
    return torch.cat(zs).std(dim=0, unbiased=False).numpy()


def train_ssl(
    model_cfg: UNetConfig,
    config: PretrainConfig,
    manifest: Manifest,
    out_dir: str | Path,
    log_name: str = "train_log.jsonl",
) -> dict:
    """Train one SSL baseline on the degraded training images and export an
    encoder checkpoint under the same schema as enhancement pretraining,
    plus the method head for inspection."""
    model_cfg.validate()
    config.validate()
    if config.method not in SSL_METHODS:
        raise ConfigError(
            f"train_ssl handles {SSL_METHODS}, got {config.method!r}; use train_enhancement"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_images = _load_split_images(manifest, "train")
    val_images = _load_split_images(manifest, "val")

    encoder = UNetEncoder(model_cfg)
    initialize_parameters(encoder, derive_seed(config.seed, "init"))
    projector = SSLProjector()
    initialize_parameters(projector, derive_seed(config.seed, "proj"))
    state = _MethodState(config.method, model_cfg, config)
    state.sync_targets(encoder, projector)

    params = list(encoder.parameters()) + list(projector.parameters())
    for mod in state.trainable_modules():
        params += list(mod.parameters())
    lr = config.resolved_lr()
    optimizer = torch.optim.Adam(params, lr=lr)

    policy = AugmentPolicy()
    policy.validate()
    logger = TrainLogger(out_dir / log_name)
    stopper = EarlyStopper(config.early_stop_patience)
    rng = np.random.default_rng(derive_seed(config.seed, "order"))
    xv1, xv2 = _fixed_val_views(val_images, policy, config.seed)

    step = 0
    best_state = None
    modules = [encoder, projector] + state.trainable_modules()

    for epoch in range(config.epochs):
        for mod in modules:
            mod.train()
        for idx in batch_indices(len(train_images), config.batch_size, rng):
            v1 = [
                augment_view(train_images[i], policy, derive_seed(config.seed, "view", epoch, int(i), 0))
                for i in idx
            ]
            v2 = [
                augment_view(train_images[i], policy, derive_seed(config.seed, "view", epoch, int(i), 1))
                for i in idx
            ]
            x1, x2 = _views_to_tensor(v1), _views_to_tensor(v2)

            optimizer.zero_grad()
            loss = _method_loss(config.method, state, encoder, projector, x1, x2, config)
            loss.backward()
            optimizer.step()
            state.ema_step(encoder, projector)
            if config.method == "moco":
                state.enqueue(_moco_keys(state, x2))
                assert len(state.queue) == config.queue_size
            step += 1
            logger.log(step, "train", loss.item(), lr, epoch=epoch)

        for mod in modules:
            mod.eval()
        with torch.no_grad():
            val_losses = []
            for start in range(0, len(xv1), config.batch_size):
                val_losses.append(
                    _method_loss(
                        config.method,
                        state,
                        encoder,
                        projector,
                        xv1[start : start + config.batch_size],
                        xv2[start : start + config.batch_size],
                        config,
                    ).item()
                    * len(xv1[start : start + config.batch_size])
                )
            val_loss = sum(val_losses) / len(xv1)

        extra = {"epoch": epoch}
        if config.method == "simsiam":
            std = _projection_std(encoder, projector, xv1, config.batch_size)
            extra["proj_std_mean"] = float(std.mean())
            extra["proj_std_min"] = float(std.min())
            extra["proj_std"] = [round(float(s), 6) for s in std]
        logger.log(step, "val", val_loss, lr, **extra)

        if stopper.update(val_loss):
            head = {"projector": projector}
            if state.predictor is not None:
                head["predictor"] = state.predictor
            head_params = {}
            for name, mod in head.items():
                for k, v in mod.state_dict().items():
                    head_params[f"{name}.{k}"] = v.detach().clone()
            best_state = {
                "encoder": {k: v.detach().clone() for k, v in encoder.state_dict().items()},
                "head": head_params,
                "step": step,
            }
        if stopper.should_stop:
            break

    if best_state is None:
        raise RuntimeError("no validation epoch completed")

    enc_path = out_dir / "encoder.ckpt"
    head_path = out_dir / "ssl_head.ckpt"
    digest = manifest.config_digest
    extra_meta = {"method": config.method, "best_val_loss": stopper.best}
    save_checkpoint(
        best_state["encoder"],
        CheckpointMeta("encoder", digest, best_state["step"], config.seed, extra=extra_meta),
        enc_path,
    )
    save_checkpoint(
        best_state["head"],
        CheckpointMeta("ssl_head", digest, best_state["step"], config.seed, extra=extra_meta),
        head_path,
    )

    return {
        "method": config.method,
        "epochs_run": epoch + 1,
        "best_val_loss": stopper.best,
        "final_train_loss": logger.losses("train")[-1],
        "encoder_path": str(enc_path),
        "head_path": str(head_path),
        "log_path": str(logger.path),
    }
