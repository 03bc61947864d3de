"""Command-line front end: generate -> pretrain -> probe -> eval -> compare.

Every stage writes its outputs (plus a resolved-config snapshot) under
output_dir/<stage>/ and is idempotent for a fixed config and root seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    RunConfig,
    apply_env,
    apply_overrides,
    load_config,
    write_snapshot,
)
from .errors import ConfigError, DependencyError, RidgelineError
from .evalkit.metrics import MetricsReport, report, select_threshold
from .evalkit.reports import emit_comparison, plot_roc_png, write_metrics_bundle
from .evalkit.scoring import score_pairs
from .model.checkpoint import CheckpointMeta, load_checkpoint, save_checkpoint
from .model.unet import UNetEncoder, initialize_parameters
from .pretrain.enhance import train_enhancement
from .pretrain.ssl import train_ssl
from .probe.pairs import make_pairs, save_pairs
from .probe.verifier import train_verifier
from .seeding import config_digest, derive_seed
from .synthdata.manifest import Manifest, build_dataset, load_manifest

PRETRAIN_METHODS = ("enhance", "simclr", "moco", "byol", "simsiam")


def _require(path: Path, what: str, hint: str) -> Path:
    if not path.exists():
        raise DependencyError(f"{what} missing: {path} (run `ridgeline {hint}` first)")
    return path


def _warn(message: str, **fields) -> None:
    print(json.dumps({"warning": message, **fields}, sort_keys=True), file=sys.stderr)


def _check_provenance(expected: str, actual: str, what: str) -> None:
    if expected != actual:
        _warn("config digest mismatch", artifact=what, expected=expected, actual=actual)


def _load_pipeline_manifest(config: RunConfig) -> Manifest:
    man_path = Path(config.output_dir) / "generate" / "manifest.json"
    _require(man_path, "dataset manifest", "generate")
    manifest = load_manifest(man_path)
    expected = config_digest(dataclasses.asdict(config.synthdata))
    _check_provenance(expected, manifest.config_digest, str(man_path))
    return manifest


def cmd_generate(config: RunConfig, workers: int = 1) -> Manifest:
    out = Path(config.output_dir) / "generate"
    write_snapshot(config, out)
    manifest = build_dataset(config.synthdata, out, workers=workers)
    print(
        f"generate: {len(manifest.records)} records "
        f"({len(manifest.for_split('train'))} train / {len(manifest.for_split('val'))} val / "
        f"{len(manifest.for_split('test'))} test) -> {out}"
    )
    return manifest


def cmd_pretrain(config: RunConfig, method: str | None = None) -> dict:
    method = method or config.pretrain.method
    manifest = _load_pipeline_manifest(config)
    out = Path(config.output_dir) / f"pretrain_{method}"
    write_snapshot(config, out)
    seed = derive_seed(config.root_seed, "pretrain", method)

    if method == "random":
        # untrained baseline: the probe sees exactly what initialization gives
        encoder = UNetEncoder(config.model)
        initialize_parameters(encoder, derive_seed(seed, "init"))
        meta = CheckpointMeta(
            "encoder", manifest.config_digest, step=0, seed=seed, extra={"method": "random"}
        )
        path = out / "encoder.ckpt"
        save_checkpoint(encoder.state_dict(), meta, path)
        print(f"pretrain[random]: wrote untrained encoder -> {path}")
        return {"method": "random", "encoder_path": str(path)}

    if method not in PRETRAIN_METHODS:
        raise ConfigError(f"unknown pretraining method {method!r}")
    pcfg = dataclasses.replace(config.pretrain, method=method, seed=seed)
    pcfg.validate()
    if method == "enhance":
        summary = train_enhancement(config.model, pcfg, manifest, out)
        print(
            f"pretrain[enhance]: {summary['epochs_run']} epochs, "
            f"best val L2 {summary['best_val_l2']:.5f} -> {summary['encoder_path']}"
        )
    else:
        summary = train_ssl(config.model, pcfg, manifest, out)
        print(
            f"pretrain[{method}]: {summary['epochs_run']} epochs, "
            f"best val loss {summary['best_val_loss']:.4f} -> {summary['encoder_path']}"
        )
    return summary


def cmd_probe(config: RunConfig, method: str | None = None, encoder: str | None = None) -> dict:
    method = method or config.pretrain.method
    manifest = _load_pipeline_manifest(config)
    enc_path = (
        Path(encoder)
        if encoder is not None
        else Path(config.output_dir) / f"pretrain_{method}" / "encoder.ckpt"
    )
    _require(enc_path, "encoder checkpoint", f"pretrain --method {method}")
    _, enc_meta = load_checkpoint(enc_path, expect_component="encoder")
    _check_provenance(manifest.config_digest, enc_meta.config_digest, str(enc_path))

    out = Path(config.output_dir) / f"probe_{method}"
    write_snapshot(config, out)
    pairs_train = make_pairs(manifest, "train", ratio=config.eval.ratio, seed=config.eval.seed)
    pairs_val = make_pairs(manifest, "val", ratio=config.eval.ratio, seed=config.eval.seed)
    save_pairs(pairs_train, out / "pairs_train.json")
    save_pairs(pairs_val, out / "pairs_val.json")

    summary = train_verifier(
        config.model, enc_path, pairs_train, config.probe, out, val_pairs=pairs_val
    )
    print(
        f"probe[{method}]: {summary['epochs_run']} epochs, train acc "
        f"{summary['train_accuracy']:.3f} -> {summary['projection_path']}"
    )
    return summary


def cmd_eval(
    config: RunConfig, method: str | None = None, mode: str | None = None
) -> MetricsReport:
    method = method or config.pretrain.method
    mode = mode or config.eval.mode
    if mode not in ("classifier", "similarity"):
        raise ConfigError(f"eval mode must be classifier or similarity, got {mode!r}")
    manifest = _load_pipeline_manifest(config)

    enc_path = Path(config.output_dir) / f"pretrain_{method}" / "encoder.ckpt"
    probe_dir = Path(config.output_dir) / f"probe_{method}"
    proj_path = probe_dir / "projection.ckpt"
    cls_path = probe_dir / "classifier.ckpt"
    _require(enc_path, "encoder checkpoint", f"pretrain --method {method}")
    _require(proj_path, "projection checkpoint", f"probe --method {method}")
    if mode == "classifier":
        _require(cls_path, "classifier checkpoint", f"probe --method {method}")
    _, proj_meta = load_checkpoint(proj_path, expect_component="projection")
    _check_provenance(manifest.config_digest, proj_meta.config_digest, str(proj_path))

    pairs_test = make_pairs(manifest, "test", ratio=config.eval.ratio, seed=config.eval.seed)
    score_mode = "classifier" if mode == "classifier" else "cosine"
    kwargs = dict(
        model_cfg=config.model,
        encoder_ckpt=enc_path,
        projection_ckpt=proj_path,
        batch_size=config.eval.batch_size,
    )
    if mode == "classifier":
        kwargs["classifier_ckpt"] = cls_path
    scores = score_pairs(pairs_test, score_mode, **kwargs)

    if mode == "classifier":
        threshold = 0.5
    else:
        pairs_val = make_pairs(manifest, "val", ratio=config.eval.ratio, seed=config.eval.seed)
        val_scores = score_pairs(pairs_val, score_mode, **kwargs)
        threshold = select_threshold(val_scores, config.eval.threshold_criterion)

    rep = report(scores, threshold)
    out = Path(config.output_dir) / f"eval_{method}_{mode}"
    digest = write_snapshot(config, out)
    write_metrics_bundle(rep, out, label=f"{method}/{mode}", extra={"config_digest": digest})
    print(
        f"eval[{method}/{mode}]: entire acc {rep.accuracy['entire']:.4f}, "
        f"AUC {rep.auc:.4f}, EER {rep.eer:.4f} -> {out / 'metrics.json'}"
    )
    return rep


def cmd_compare(config: RunConfig, workers: int = 1) -> dict:
    """Run all five pretraining methods through the identical probe + eval
    and emit one comparison matrix."""
    man_path = Path(config.output_dir) / "generate" / "manifest.json"
    if not man_path.exists():
        cmd_generate(config, workers=workers)

    named: dict[str, MetricsReport] = {}
    for method in PRETRAIN_METHODS:
        cmd_pretrain(config, method)
        cmd_probe(config, method)
        for mode in ("classifier", "similarity"):
            named[f"{method}-{mode}"] = cmd_eval(config, method, mode)

    out = Path(config.output_dir) / "compare"
    write_snapshot(config, out)
    paths = emit_comparison(named, out)
    print(f"compare: {len(named)} rows -> {paths['csv']}")
    return paths


def cmd_plot_roc(input_csv: str, output: str) -> None:
    rows = Path(input_csv).read_text().strip().splitlines()
    if not rows or rows[0] != "fpr,tpr,threshold":
        raise ConfigError(f"{input_csv} is not a roc.csv (bad header)")
    points = np.array([[float(x) for x in line.split(",")] for line in rows[1:]])
    plot_roc_png(points, output, label=Path(input_csv).parent.name)
    print(f"plot-roc: {len(points)} points -> {output}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ridgeline",
        description="Enhancement-pretrained fingerprint verification pipeline.",
        epilog="Any extra --section.key=value flag overrides that config key.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; defaults apply when omitted")

    p = sub.add_parser("generate", help="render the synthetic dataset")
    common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel identity renderers")

    p = sub.add_parser("pretrain", help="stage-1 training")
    common(p)
    p.add_argument(
        "--method",
        choices=PRETRAIN_METHODS + ("random",),
        help="pretraining method (random = untrained baseline encoder)",
    )

    p = sub.add_parser("probe", help="stage-2 frozen-encoder probing")
    common(p)
    p.add_argument("--method", help="which pretrained encoder to probe")
    p.add_argument("--encoder", help="explicit encoder checkpoint path")

    p = sub.add_parser("eval", help="score test pairs and emit metrics")
    common(p)
    p.add_argument("--method", help="which probed encoder to evaluate")
    p.add_argument("--mode", choices=("classifier", "similarity"))

    p = sub.add_parser("compare", help="all five methods through probe + eval")
    common(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("plot-roc", help="re-render a ROC curve from its CSV")
    p.add_argument("--input", required=True, help="path to a roc.csv")
    p.add_argument("--output", required=True, help="output PNG path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args, unknown = parser.parse_known_args(argv)

    overrides = []
    for item in unknown:
        if item.startswith("--") and "=" in item:
            overrides.append(item[2:])
        else:
            parser.error(f"unrecognized argument: {item}")

    try:
        if args.command == "plot-roc":
            cmd_plot_roc(args.input, args.output)
            return 0

        config = load_config(args.config)
        config = apply_overrides(config, overrides)
        config = apply_env(config)
        config = config.resolve()

        if args.command == "generate":
            cmd_generate(config, workers=args.workers)
        elif args.command == "pretrain":
            cmd_pretrain(config, method=args.method)
        elif args.command == "probe":
            cmd_probe(config, method=args.method, encoder=args.encoder)
        elif args.command == "eval":
            cmd_eval(config, method=args.method, mode=args.mode)
        elif args.command == "compare":
            cmd_compare(config, workers=args.workers)
        return 0
    except RidgelineError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
