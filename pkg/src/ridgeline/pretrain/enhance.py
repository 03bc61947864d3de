"""Enhancement pretraining: a U-Net regresses the cleaned target image from
its degraded counterpart, and the encoder is kept as the representation."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..model.checkpoint import CheckpointMeta, save_checkpoint
from ..model.unet import UNet, UNetConfig, initialize_parameters
from ..seeding import derive_seed
from ..synthdata.manifest import Manifest
from .loop import PretrainConfig, EarlyStopper, TrainLogger, batch_indices, load_split_tensors
from .losses import loss_l2


def train_enhancement(
    model_cfg: UNetConfig,
    config: PretrainConfig,
    manifest: Manifest,
    out_dir: str | Path,
    log_name: str = "train_log.jsonl",
) -> dict:
    """Train the U-Net on (degraded, target) pairs and write best-validation
    encoder and decoder checkpoints under ``out_dir``.

    Returns a summary dict with final/best losses and checkpoint paths.
    """
    model_cfg.validate()
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = UNet(model_cfg)
    initialize_parameters(model, derive_seed(config.seed, "init"))

    x_train, y_train = load_split_tensors(manifest, "train")
    x_val, y_val = load_split_tensors(manifest, "val")

    lr = config.resolved_lr()
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    logger = TrainLogger(out_dir / log_name)
    stopper = EarlyStopper(config.early_stop_patience)
    rng = np.random.default_rng(derive_seed(config.seed, "order"))

    enc_path = out_dir / "encoder.ckpt"
    dec_path = out_dir / "decoder.ckpt"
    step = 0
    best_state = None

    for epoch in range(config.epochs):
        model.train()
        for idx in batch_indices(len(x_train), config.batch_size, rng):
            batch_x = x_train[idx]
            batch_y = y_train[idx]
            optimizer.zero_grad()
            pred, _ = model(batch_x)
            loss = loss_l2(pred, batch_y)
            loss.backward()
            optimizer.step()
            step += 1
            logger.log(step, "train", loss.item(), lr, epoch=epoch)

        model.eval()
        with torch.no_grad():
            val_losses = []
            for start in range(0, len(x_val), config.batch_size):
                pred, _ = model(x_val[start : start + config.batch_size])
                val_losses.append(
                    loss_l2(pred, y_val[start : start + config.batch_size]).item()
                    * len(pred)
                )
            val_loss = sum(val_losses) / len(x_val)
        logger.log(step, "val", val_loss, lr, epoch=epoch)

        if stopper.update(val_loss):
            best_state = {
                "encoder": {k: v.detach().clone() for k, v in model.encoder.state_dict().items()},
                "decoder": {k: v.detach().clone() for k, v in model.decoder.state_dict().items()},
                "step": step,
            }
        if stopper.should_stop:
            break

    if best_state is None:  # every epoch failed to improve on +inf: impossible, but be safe
        raise RuntimeError("no validation epoch completed")

    digest = manifest.config_digest
    for component, path in (("encoder", enc_path), ("decoder", dec_path)):
        meta = CheckpointMeta(
            component=component,
            config_digest=digest,
            step=best_state["step"],
            seed=config.seed,
            extra={"method": "enhance", "best_val_l2": stopper.best},
        )
        save_checkpoint(best_state[component], meta, path)

    return {
        "method": "enhance",
        "epochs_run": epoch + 1,
        "best_val_l2": stopper.best,
        "final_train_loss": logger.losses("train")[-1],
        "encoder_path": str(enc_path),
        "decoder_path": str(dec_path),
        "log_path": str(logger.path),
    }
