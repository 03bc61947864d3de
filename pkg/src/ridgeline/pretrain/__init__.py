"""Stage-1 training: enhancement pretraining plus four SSL baselines on the
identical encoder."""

from .loop import EarlyStopper, PretrainConfig, TrainLogger
from .losses import (
    byol_ema_update,
    loss_byol,
    loss_infonce_queue,
    loss_l2,
    loss_ntxent,
    loss_simsiam,
)
from .enhance import train_enhancement
from .ssl import train_ssl

__all__ = [
    "EarlyStopper",
    "PretrainConfig",
    "TrainLogger",
    "byol_ema_update",
    "loss_byol",
    "loss_infonce_queue",
    "loss_l2",
    "loss_ntxent",
    "loss_simsiam",
    "train_enhancement",
    "train_ssl",
]
