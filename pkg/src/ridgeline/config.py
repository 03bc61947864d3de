"""Run configuration: one JSON document covering every stage, with
dot-path overrides and deterministic per-stage seed derivation.

The root seed is split per stage as derive_seed(root_seed, stage_name), so
independent stages never share RNG streams and reruns are reproducible from
the single root value.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model.unet import UNetConfig
from .pretrain.loop import PretrainConfig
from .probe.verifier import ProbeConfig
from .seeding import config_digest, derive_seed
from .synthdata.manifest import GenerationConfig

SEED_ENV_VAR = "RIDGELINE_SEED"
EVAL_MODES = ("classifier", "similarity")
THRESHOLD_CRITERIA = ("max_accuracy", "eer")


@dataclass
class EvalConfig:
    mode: str = "classifier"
    ratio: float = 3.0
    threshold_criterion: str = "max_accuracy"
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in EVAL_MODES:
            raise ConfigError(f"eval mode must be one of {EVAL_MODES}, got {self.mode!r}")
        if self.ratio <= 0:
            raise ConfigError("pair ratio must be positive")
        if self.threshold_criterion not in THRESHOLD_CRITERIA:
            raise ConfigError(
                f"threshold_criterion must be one of {THRESHOLD_CRITERIA}, "
                f"got {self.threshold_criterion!r}"
            )
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class RunConfig:
    root_seed: int = 0
    output_dir: str = "runs/default"
    synthdata: GenerationConfig = field(default_factory=GenerationConfig)
    model: UNetConfig = field(default_factory=UNetConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.synthdata.validate()
        self.model.validate()
        self.pretrain.validate()
        self.probe.validate()
        self.eval.validate()
        if self.synthdata.image_size != self.model.input_size:
            raise ConfigError(
                f"synthdata.image_size ({self.synthdata.image_size}) must equal "
                f"model.input_size ({self.model.input_size})"
            )

    def resolve(self) -> "RunConfig":
        """Copy with every stage seed derived from the root seed.

        Stage seeds: generate, pretrain.<method>, probe, pairs.  The nested
        seed fields in the input are ignored; the root seed is the single
        source of randomness.
        """
        cfg = RunConfig(
            root_seed=self.root_seed,
            output_dir=self.output_dir,
            synthdata=dataclasses.replace(
                self.synthdata, seed=derive_seed(self.root_seed, "generate")
            ),
            model=dataclasses.replace(self.model),
            pretrain=dataclasses.replace(
                self.pretrain,
                seed=derive_seed(self.root_seed, "pretrain", self.pretrain.method),
            ),
            probe=dataclasses.replace(self.probe, seed=derive_seed(self.root_seed, "probe")),
            eval=dataclasses.replace(self.eval, seed=derive_seed(self.root_seed, "pairs")),
        )
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        return {
            "root_seed": self.root_seed,
            "output_dir": self.output_dir,
            "synthdata": dataclasses.asdict(self.synthdata),
            "model": dataclasses.asdict(self.model),
            "pretrain": dataclasses.asdict(self.pretrain),
            "probe": dataclasses.asdict(self.probe),
            "eval": dataclasses.asdict(self.eval),
        }

    def digest(self) -> str:
        return config_digest(self.as_dict())


_SECTION_TYPES = {
    "synthdata": GenerationConfig,
    "model": UNetConfig,
    "pretrain": PretrainConfig,
    "probe": ProbeConfig,
    "eval": EvalConfig,
}


def _build_section(cls, raw: dict, section: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")
    coerced = {}
    for key, value in raw.items():
        if isinstance(value, list):  # JSON has no tuples; ranged fields use them
            value = tuple(value)
        coerced[key] = value
    return cls(**coerced)


def config_from_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - set(_SECTION_TYPES) - {"root_seed", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")
    kwargs = {}
    if "root_seed" in raw:
        kwargs["root_seed"] = int(raw["root_seed"])
    if "output_dir" in raw:
        kwargs["output_dir"] = str(raw["output_dir"])
    for section, cls in _SECTION_TYPES.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"config section {section!r} must be an object")
            kwargs[section] = _build_section(cls, raw[section], section)
    return RunConfig(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``section.key=value`` (or ``root_seed=7``) strings on top of a
    config.  Values are parsed as JSON with a plain-string fallback."""
    raw = config.as_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, _, text = item.partition("=")
        dotted = dotted.lstrip("-")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        parts = dotted.split(".")
        if len(parts) == 1:
            if parts[0] not in ("root_seed", "output_dir"):
                raise ConfigError(f"unknown top-level override {parts[0]!r}")
            raw[parts[0]] = value
        elif len(parts) == 2:
            section, key = parts
            if section not in _SECTION_TYPES:
                raise ConfigError(f"unknown config section {section!r}")
            raw.setdefault(section, {})[key] = value
        else:
            raise ConfigError(f"override path {dotted!r} nests too deep")
    return config_from_dict(raw)


def apply_env(config: RunConfig) -> RunConfig:
    """RIDGELINE_SEED overrides root_seed when set."""
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return config
    try:
        seed = int(env)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return dataclasses.replace(config, root_seed=seed)


def write_snapshot(config: RunConfig, stage_dir: str | Path) -> str:
    """Resolved-config snapshot written into the stage directory; returns the
    digest that downstream artifacts embed."""
    stage_dir = Path(stage_dir)
    stage_dir.mkdir(parents=True, exist_ok=True)
    digest = config.digest()
    payload = {"digest": digest, "config": config.as_dict()}
    with open(stage_dir / "resolved_config.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest
