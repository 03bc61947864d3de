"""Shared training-loop machinery: config, early stopping, JSONL logging,
and manifest-backed tensor datasets."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, DataError
from ..imaging import load_image
from ..synthdata.manifest import Manifest

METHODS = ("enhance", "simclr", "moco", "byol", "simsiam")

# per-method defaults; anything set explicitly in the config wins
DEFAULT_LR = {"enhance": 1e-3, "simclr": 3e-4, "moco": 3e-4, "byol": 3e-4, "simsiam": 3e-4}
DEFAULT_MOMENTUM = {"moco": 0.99, "byol": 0.996}


@dataclass
class PretrainConfig:
    method: str = "enhance"
    epochs: int = 50
    early_stop_patience: int = 5
    batch_size: int = 8
    learning_rate: float | None = None
    temperature: float = 0.2
    queue_size: int = 1024
    momentum: float | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.queue_size < self.batch_size:
            raise ConfigError(
                f"queue_size {self.queue_size} must be >= batch_size {self.batch_size}"
            )
        m = self.resolved_momentum()
        if not 0.0 <= m < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {m}")
        if self.resolved_lr() <= 0:
            raise ConfigError("learning_rate must be positive")

    def resolved_lr(self) -> float:
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return DEFAULT_LR[self.method]

    def resolved_momentum(self) -> float:
        if self.momentum is not None:
            return float(self.momentum)
        return DEFAULT_MOMENTUM.get(self.method, 0.99)

    def as_dict(self) -> dict:
        return asdict(self)


class EarlyStopper:
    """Tracks the best validation value and how long since it improved."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        if patience < 1:
            raise ConfigError("patience must be >= 1")
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.stale = 0
        self.best_history: list[float] = []

    def update(self, value: float) -> bool:
        """Record one validation value; True when it is a new best."""
        improved = value < self.best - self.min_delta
        if improved:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        self.best_history.append(self.best)
        return improved

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


class TrainLogger:
    """Newline-delimited JSON training log: one record per event with step,
    split, loss, lr, and wall-clock milliseconds."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.history: list[dict] = []
        self._start = time.monotonic()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def log(self, step: int, split: str, loss: float, lr: float, **extra) -> None:
        record = {
            "step": int(step),
            "split": split,
            "loss": float(loss),
            "lr": float(lr),
            "wall_ms": int(1000 * (time.monotonic() - self._start)),
            **extra,
        }
        self.history.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def losses(self, split: str) -> list[float]:
        return [r["loss"] for r in self.history if r["split"] == split]


def load_split_tensors(
    manifest: Manifest, split: str, which: str = "both"
) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Load a split's images as (N, 1, H, W) float32 tensors.

    ``which``: "both" returns (degraded, target); "degraded" returns
    (degraded, None).  Empty splits are an error; training on nothing would
    otherwise fail much later and less clearly.
    """
    records = manifest.for_split(split)
    if not records:
        raise DataError(f"manifest has no records in the {split!r} split")
    degraded = []
    targets = []
    for r in records:
        degraded.append(load_image(manifest.abs_path(r.degraded_path)))
        if which == "both":
            targets.append(load_image(manifest.abs_path(r.target_path)))
    x = torch.from_numpy(np.stack(degraded)).float().unsqueeze(1)
    if which == "both":
        y = torch.from_numpy(np.stack(targets)).float().unsqueeze(1)
        return x, y
    return x, None


def batch_indices(
    n: int, batch_size: int, rng: np.random.Generator, drop_last: bool = False
) -> list[np.ndarray]:
    """Shuffled minibatch index lists for one epoch."""
    order = rng.permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        if drop_last and len(chunk) < batch_size:
            break
        batches.append(chunk)
    return batches
