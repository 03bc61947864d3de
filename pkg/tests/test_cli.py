"""Config plumbing and the command-line pipeline at toy scale."""

import json
import subprocess
import sys

import pytest

from ridgeline.cli import main
from ridgeline.config import (
    EvalConfig,
    RunConfig,
    apply_env,
    apply_overrides,
    config_from_dict,
    load_config,
    write_snapshot,
)
from ridgeline.errors import ConfigError
from ridgeline.seeding import derive_seed

TOY = {
    "root_seed": 3,
    "synthdata": {
        "n_identities": 8,
        "impressions_per_identity": 4,
        "image_size": 64,
        "split_fractions": [0.5, 0.25, 0.25],
    },
    "model": {"input_size": 64},
    "pretrain": {"epochs": 2, "early_stop_patience": 2, "batch_size": 8},
    "probe": {"epochs": 2, "early_stop_patience": 2, "batch_size": 16},
    "eval": {"ratio": 1.0},
}


def _toy_config(tmp_path, **extra):
    raw = json.loads(json.dumps(TOY))
    raw["output_dir"] = str(tmp_path / "run")
    raw.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


# ---------------- config machinery ----------------


def test_defaults_validate_and_digest_is_stable():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.digest() == RunConfig().digest()
    assert cfg.digest() != RunConfig(root_seed=1).digest()


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"synthdata": {"n_fingers": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"optimizer": {}})


def test_image_size_must_match_model_input():
    cfg = config_from_dict({"synthdata": {"image_size": 128}, "model": {"input_size": 64}})
    with pytest.raises(ConfigError):
        cfg.validate()


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json")


def test_apply_overrides_dot_paths():
    cfg = RunConfig()
    cfg = apply_overrides(
        cfg,
        [
            "root_seed=9",
            "synthdata.n_identities=5",
            "pretrain.method=byol",
            "pretrain.learning_rate=0.01",
            "output_dir=/tmp/x",
        ],
    )
    assert cfg.root_seed == 9
    assert cfg.synthdata.n_identities == 5
    assert cfg.pretrain.method == "byol"
    assert cfg.pretrain.learning_rate == 0.01
    assert cfg.output_dir == "/tmp/x"


def test_apply_overrides_rejects_unknown_path():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["synthdata.bogus=1"])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["no_equals_sign"])


def test_env_seed_override(monkeypatch):
    monkeypatch.setenv("RIDGELINE_SEED", "42")
    assert apply_env(RunConfig()).root_seed == 42
    monkeypatch.setenv("RIDGELINE_SEED", "not-an-int")
    with pytest.raises(ConfigError):
        apply_env(RunConfig())
    monkeypatch.delenv("RIDGELINE_SEED")
    assert apply_env(RunConfig(root_seed=7)).root_seed == 7


def test_resolve_derives_stage_seeds():
    cfg = RunConfig(root_seed=13).resolve()
    assert cfg.synthdata.seed == derive_seed(13, "generate")
    assert cfg.pretrain.seed == derive_seed(13, "pretrain", cfg.pretrain.method)
    assert cfg.probe.seed == derive_seed(13, "probe")
    assert cfg.eval.seed == derive_seed(13, "pairs")


def test_write_snapshot_round_trip(tmp_path):
    cfg = RunConfig(root_seed=5).resolve()
    digest = write_snapshot(cfg, tmp_path)
    raw = json.loads((tmp_path / "resolved_config.json").read_text())
    assert raw["digest"] == digest == cfg.digest()
    assert raw["config"]["root_seed"] == 5


# ---------------- pipeline commands ----------------


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """generate + enhance pretrain + probe + eval, once, at toy scale."""
    tmp_path = tmp_path_factory.mktemp("cli")
    cfg_path = _toy_config(tmp_path)
    out = tmp_path / "run"
    assert main(["generate", "--config", str(cfg_path)]) == 0
    assert main(["pretrain", "--config", str(cfg_path), "--method", "enhance"]) == 0
    assert main(["probe", "--config", str(cfg_path), "--method", "enhance"]) == 0
    assert main(["eval", "--config", str(cfg_path), "--method", "enhance", "--mode", "classifier"]) == 0
    return cfg_path, out


def test_stage_layout_and_snapshots(pipeline):
    cfg_path, out = pipeline
    for stage in ("generate", "pretrain_enhance", "probe_enhance", "eval_enhance_classifier"):
        assert (out / stage / "resolved_config.json").exists(), stage
    assert (out / "generate" / "manifest.json").exists()
    assert (out / "pretrain_enhance" / "encoder.ckpt").exists()
    assert (out / "probe_enhance" / "projection.ckpt").exists()
    assert (out / "probe_enhance" / "classifier.ckpt").exists()
    metrics = json.loads((out / "eval_enhance_classifier" / "metrics.json").read_text())
    assert metrics["mode"] == "classifier_prob"
    assert "config_digest" in metrics
    for name in ("roc.csv", "roc.svg", "roc.png"):
        assert (out / "eval_enhance_classifier" / name).exists()


def test_regenerate_is_idempotent(pipeline):
    cfg_path, out = pipeline
    manifest = out / "generate" / "manifest.json"
    before = manifest.read_bytes()
    assert main(["generate", "--config", str(cfg_path)]) == 0
    assert manifest.read_bytes() == before


def test_missing_dependency_fails_with_json_error(pipeline, tmp_path, capsys):
    cfg_path = _toy_config(tmp_path)
    code = main(["probe", "--config", str(cfg_path), "--method", "enhance"])
    err = capsys.readouterr().err
    assert code == 1
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "DependencyError"
    assert "generate" in payload["message"] or "pretrain" in payload["message"]


def test_random_pseudo_method_writes_untrained_encoder(pipeline):
    cfg_path, out = pipeline
    assert main(["pretrain", "--config", str(cfg_path), "--method", "random"]) == 0
    from ridgeline.model import load_checkpoint

    params, meta = load_checkpoint(out / "pretrain_random" / "encoder.ckpt", expect_component="encoder")
    assert meta.step == 0
    assert meta.extra["method"] == "random"


def test_cli_overrides_reach_snapshot(pipeline, tmp_path):
    cfg_path, _ = pipeline
    out2 = tmp_path / "run2"
    assert (
        main(
            [
                "generate",
                "--config",
                str(cfg_path),
                f"--output_dir={out2}",
                "--synthdata.n_identities=6",
                "--root_seed=8",
            ]
        )
        == 0
    )
    raw = json.loads((out2 / "generate" / "resolved_config.json").read_text())
    assert raw["config"]["synthdata"]["n_identities"] == 6
    assert raw["config"]["root_seed"] == 8
    man = json.loads((out2 / "generate" / "manifest.json").read_text())
    idents = {r["identity_id"] for r in man["records"]}
    assert len(idents) == 6


def test_env_seed_changes_pipeline_snapshot(pipeline, tmp_path, monkeypatch):
    cfg_path, _ = pipeline
    out3 = tmp_path / "run3"
    monkeypatch.setenv("RIDGELINE_SEED", "99")
    assert main(["generate", "--config", str(cfg_path), f"--output_dir={out3}"]) == 0
    raw = json.loads((out3 / "generate" / "resolved_config.json").read_text())
    assert raw["config"]["root_seed"] == 99


def test_plot_roc_from_csv(pipeline, tmp_path):
    cfg_path, out = pipeline
    csv = out / "eval_enhance_classifier" / "roc.csv"
    png = tmp_path / "replot.png"
    assert main(["plot-roc", "--input", str(csv), "--output", str(png)]) == 0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_roc_rejects_non_roc_csv(tmp_path, capsys):
    bad = tmp_path / "other.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    code = main(["plot-roc", "--input", str(bad), "--output", str(tmp_path / "x.png")])
    assert code == 1
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["error"] == "ConfigError"


def test_unknown_flag_without_equals_is_an_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--frobnicate"])
    assert exc.value.code == 2


def test_console_script_help():
    proc = subprocess.run(
        [sys.executable, "-m", "ridgeline", "--help"], capture_output=True, text=True
    )
    if proc.returncode != 0:  # no module entry point; fall back to the script
        proc = subprocess.run(["ridgeline", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "generate" in proc.stdout and "compare" in proc.stdout
