"""Checkpoint container: one JSON header line, then raw little-endian
float32 parameter blocks in header order.

The header names every block and its shape, tags which network component the
file holds, and records training provenance (config digest, step, seed), so
mixed-provenance runs are detectable without loading any tensor data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..errors import CheckpointError

FORMAT_VERSION = 1
COMPONENTS = ("encoder", "decoder", "projection", "classifier", "ssl_head")


@dataclass
class CheckpointMeta:
    component: str
    config_digest: str = ""
    step: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.component not in COMPONENTS:
            raise CheckpointError(
                f"unknown component {self.component!r}; expected one of {COMPONENTS}"
            )


def _as_state(params: nn.Module | dict) -> dict[str, torch.Tensor]:
    if isinstance(params, nn.Module):
        return params.state_dict()
    return dict(params)


def save_checkpoint(params: nn.Module | dict, meta: CheckpointMeta, path: str | Path) -> Path:
    """Write all parameter blocks as float32; the save->load round trip is
    bit-exact for float32 parameters."""
    meta.validate()
    state = _as_state(params)
    blocks = []
    payloads = []
    for name, tensor in state.items():
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        blocks.append({"name": name, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "component": meta.component,
        "blocks": blocks,
        "provenance": {
            "config_digest": meta.config_digest,
            "step": int(meta.step),
            "seed": int(meta.seed),
            **meta.extra,
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for payload in payloads:
            fh.write(payload)
    return path


def load_checkpoint(
    path: str | Path, expect_component: str | None = None
) -> tuple[dict[str, torch.Tensor], CheckpointMeta]:
    """Read a checkpoint, verifying version, component tag, and that the
    payload length matches the declared shapes exactly."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {header.get('format_version')!r} not supported"
        )
    component = header.get("component")
    if component not in COMPONENTS:
        raise CheckpointError(f"{path}: unknown component tag {component!r}")
    if expect_component is not None and component != expect_component:
        raise CheckpointError(
            f"{path}: holds a {component!r} checkpoint, caller needs {expect_component!r}"
        )
    body = raw[newline + 1 :]
    state: dict[str, torch.Tensor] = {}
    offset = 0
    for block in header.get("blocks", []):
        name, shape = block["name"], tuple(block["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(body):
            raise CheckpointError(f"{path}: block {name!r} truncated")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(
            f"{path}: {len(body) - offset} trailing bytes after declared blocks"
        )
    prov = header.get("provenance", {})
    known = {"config_digest", "step", "seed"}
    meta = CheckpointMeta(
        component=component,
        config_digest=prov.get("config_digest", ""),
        step=int(prov.get("step", 0)),
        seed=int(prov.get("seed", 0)),
        extra={k: v for k, v in prov.items() if k not in known},
    )
    return state, meta


def load_into(module: nn.Module, path: str | Path, expect_component: str) -> CheckpointMeta:
    """Load a checkpoint's blocks into ``module`` strictly by name/shape."""
    state, meta = load_checkpoint(path, expect_component=expect_component)
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter blocks do not fit module: {exc}") from exc
    return meta


def params_digest(params: nn.Module | dict) -> str:
    """Digest over block names, shapes, and float32 values; equality means
    the parameter sets are bit-identical."""
    state = _as_state(params)
    h = hashlib.sha256()
    for name, tensor in state.items():
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        h.update(name.encode("utf-8"))
        h.update(str(list(arr.shape)).encode("utf-8"))
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()


def arch_digest(params: nn.Module | dict) -> str:
    """Digest over block names and shapes only; equality means the two
    parameter sets describe the same architecture."""
    state = _as_state(params)
    h = hashlib.sha256()
    for name, tensor in state.items():
        h.update(name.encode("utf-8"))
        h.update(str(list(tensor.shape)).encode("utf-8"))
    return h.hexdigest()


def meta_as_dict(meta: CheckpointMeta) -> dict:
    return asdict(meta)
