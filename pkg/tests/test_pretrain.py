"""Loss-function oracles and training-loop contracts.

NT-Xent and InfoNCE are compared against brute-force float64 enumeration;
BYOL/SimSiam against closed forms; every loss against central-difference
gradients. Training loops are exercised on tiny rendered datasets.
"""

import json
import math

import numpy as np
import pytest
import torch

from ridgeline.errors import ConfigError, ContractError, DataError, DegenerateInputError
from ridgeline.model import (
    SSLPredictor,
    UNetConfig,
    UNetEncoder,
    arch_digest,
    initialize_parameters,
    load_checkpoint,
    load_into,
    params_digest,
)
from ridgeline.pretrain import (
    EarlyStopper,
    PretrainConfig,
    TrainLogger,
    byol_ema_update,
    loss_byol,
    loss_infonce_queue,
    loss_l2,
    loss_ntxent,
    loss_simsiam,
    train_enhancement,
    train_ssl,
)
from ridgeline.pretrain.losses import default_pairing
from ridgeline.synthdata.manifest import GenerationConfig, build_dataset

GRAD_TOL = 1e-4
ENUM_TOL = 1e-10

torch.set_num_threads(2)


def _central_diff(fn, x, h=1e-6):
    grad = torch.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def _grad_rel_err(analytic, numeric):
    denom = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()), min=1e-6)
    return float(((analytic - numeric).abs() / denom).max())


def _brute_ntxent(z, pairing, tau):
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    terms = []
    for i in range(len(zn)):
        num = math.exp(float(zn[i] @ zn[pairing[i]]) / tau)
        den = sum(
            math.exp(float(zn[i] @ zn[k]) / tau) for k in range(len(zn)) if k != i
        )
        terms.append(-math.log(num / den))
    return sum(terms) / len(terms)


# ---------------- L2 ----------------


def test_l2_closed_forms():
    t = torch.rand(2, 1, 8, 8, dtype=torch.float64)
    assert loss_l2(t, t).item() == 0.0
    assert abs(loss_l2(t + 0.1, t).item() - 0.01) < 1e-12


def test_l2_shape_mismatch():
    with pytest.raises(ContractError):
        loss_l2(torch.rand(2, 1, 8, 8), torch.rand(2, 1, 8, 9))


def test_l2_gradient():
    rng = np.random.default_rng(0)
    p = torch.tensor(rng.normal(size=(2, 1, 4, 4)), requires_grad=True)
    t = torch.tensor(rng.normal(size=(2, 1, 4, 4)))
    loss_l2(p, t).backward()
    analytic = 2 * (p.detach() - t) / p.numel()
    assert torch.allclose(p.grad, analytic, atol=1e-12)
    pd = p.detach().clone()
    numeric = _central_diff(lambda: loss_l2(pd, t), pd)
    assert _grad_rel_err(p.grad, numeric) < GRAD_TOL


# ---------------- NT-Xent ----------------


def test_ntxent_two_aligned_orthogonal_pairs():
    """Views [e1, e2, e1, e2] with default pairing: each positive cosine is 1
    and both negatives are orthogonal, so every term is -log(e/(e+2))."""
    z = torch.tensor([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0], [0, 1.0, 0]], dtype=torch.float64)
    expected = -math.log(math.e / (math.e + 2.0))
    assert abs(loss_ntxent(z, temperature=1.0).item() - expected) < ENUM_TOL


def test_ntxent_matches_brute_force_enumeration():
    rng = np.random.default_rng(7)
    for n in (4, 6, 8):
        for tau in (0.2, 0.5, 1.0):
            z = rng.normal(size=(n, 5))
            want = _brute_ntxent(z, default_pairing(n).numpy(), tau)
            have = loss_ntxent(torch.tensor(z), temperature=tau).item()
            assert abs(want - have) < ENUM_TOL


def test_ntxent_scale_invariance():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 4))
    a = loss_ntxent(torch.tensor(z), temperature=0.3).item()
    b = loss_ntxent(torch.tensor(z * 3.0), temperature=0.3).item()
    assert abs(a - b) < 1e-12


def test_ntxent_decreases_when_positive_similarity_rises():
    rng = np.random.default_rng(5)
    base = torch.tensor(rng.normal(size=(4, 4)))
    before = loss_ntxent(base, temperature=0.5).item()
    moved = base.clone()
    direction = base[2] / base[2].norm()
    moved[0] = base[0] + 0.5 * direction * base[0].norm()
    after = loss_ntxent(moved, temperature=0.5).item()
    assert after < before


def test_ntxent_gradient():
    rng = np.random.default_rng(11)
    z = torch.tensor(rng.normal(size=(4, 5)), requires_grad=True)
    loss_ntxent(z, temperature=0.4).backward()
    zd = z.detach().clone()
    numeric = _central_diff(lambda: loss_ntxent(zd, temperature=0.4), zd)
    assert _grad_rel_err(z.grad, numeric) < GRAD_TOL


def test_ntxent_contract_errors():
    ok = torch.eye(4, dtype=torch.float64)
    with pytest.raises(ConfigError):
        loss_ntxent(ok, temperature=0.0)
    with pytest.raises(ContractError):
        loss_ntxent(ok[:2])  # fewer than two pairs
    with pytest.raises(ContractError):
        loss_ntxent(ok, pairing=torch.tensor([0, 3, 1, 2]))  # fixed point
    with pytest.raises(ContractError):
        loss_ntxent(ok, pairing=torch.tensor([1, 2, 3, 0]))  # not an involution
    bad = ok.clone()
    bad[1] = 0.0
    with pytest.raises(DegenerateInputError):
        loss_ntxent(bad)


def test_default_pairing_is_involution():
    for n in (4, 8, 12):
        p = default_pairing(n)
        assert torch.equal(p[p], torch.arange(n))
        assert not bool((p == torch.arange(n)).any())


# ---------------- InfoNCE (queued) ----------------


def test_infonce_hand_set_similarities():
    """pos cos 0.9, neg cos 0.1 and 0.2 at tau 0.5: logits (1.8, 0.2, 0.4)."""
    q = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
    k = torch.tensor([[0.9, math.sqrt(1 - 0.81), 0.0]], dtype=torch.float64)
    queue = torch.tensor(
        [[0.1, 0.0, math.sqrt(1 - 0.01)], [0.2, 0.0, math.sqrt(1 - 0.04)]],
        dtype=torch.float64,
    )
    logits = np.array([1.8, 0.2, 0.4])
    expected = float(np.log(np.exp(logits).sum()) - logits[0])
    got = loss_infonce_queue(q, k, queue, temperature=0.5).item()
    assert abs(got - expected) < ENUM_TOL


def test_infonce_matches_brute_force_enumeration():
    rng = np.random.default_rng(13)
    for _ in range(5):
        B, K, d, tau = 3, 6, 4, 0.2
        q, k, qu = rng.normal(size=(B, d)), rng.normal(size=(B, d)), rng.normal(size=(K, d))
        qn = q / np.linalg.norm(q, axis=1, keepdims=True)
        kn = k / np.linalg.norm(k, axis=1, keepdims=True)
        qun = qu / np.linalg.norm(qu, axis=1, keepdims=True)
        total = 0.0
        for i in range(B):
            ls = np.array(
                [float(qn[i] @ kn[i]) / tau] + [float(qn[i] @ qun[j]) / tau for j in range(K)]
            )
            total += float(np.log(np.exp(ls).sum()) - ls[0])
        have = loss_infonce_queue(
            torch.tensor(q), torch.tensor(k), torch.tensor(qu), temperature=tau
        ).item()
        assert abs(total / B - have) < ENUM_TOL


def test_infonce_gradient():
    rng = np.random.default_rng(17)
    q = torch.tensor(rng.normal(size=(3, 4)), requires_grad=True)
    k = torch.tensor(rng.normal(size=(3, 4)))
    queue = torch.tensor(rng.normal(size=(5, 4)))
    loss_infonce_queue(q, k, queue, temperature=0.3).backward()
    qd = q.detach().clone()
    numeric = _central_diff(lambda: loss_infonce_queue(qd, k, queue, temperature=0.3), qd)
    assert _grad_rel_err(q.grad, numeric) < GRAD_TOL


# ---------------- BYOL ----------------


def test_byol_closed_forms():
    p = torch.tensor([[2.0, 0.0], [0.0, 3.0]], dtype=torch.float64)
    assert abs(loss_byol(p, p * 5).item()) < 1e-12  # parallel -> 0
    perp = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=torch.float64)
    assert abs(loss_byol(p, perp).item() - 2.0) < 1e-12  # orthogonal -> 2


def test_byol_target_branch_gets_no_gradient():
    rng = np.random.default_rng(19)
    p = torch.tensor(rng.normal(size=(4, 6)), requires_grad=True)
    z = torch.tensor(rng.normal(size=(4, 6)), requires_grad=True)
    loss_byol(p, z).backward()
    assert z.grad is None or bool((z.grad == 0).all())
    pd = p.detach().clone()
    numeric = _central_diff(lambda: loss_byol(pd, z.detach()), pd)
    assert _grad_rel_err(p.grad, numeric) < GRAD_TOL


def test_ema_update_endpoints_and_midpoint():
    online, target = SSLPredictor(), SSLPredictor()
    initialize_parameters(online, 1)
    initialize_parameters(target, 2)

    byol_ema_update(online, target, 0.0)
    assert params_digest(target.state_dict()) == params_digest(online.state_dict())

    initialize_parameters(target, 2)
    before = params_digest(target.state_dict())
    byol_ema_update(online, target, 1.0)
    assert params_digest(target.state_dict()) == before

    initialize_parameters(target, 2)
    snapshot = [p.detach().clone() for p in target.parameters()]
    byol_ema_update(online, target, 0.75)
    for mixed, old, new in zip(target.parameters(), snapshot, online.parameters()):
        assert torch.allclose(mixed, 0.75 * old + 0.25 * new, atol=1e-12)


def test_ema_changes_target_every_call_unless_converged():
    online, target = SSLPredictor(), SSLPredictor()
    initialize_parameters(online, 1)
    initialize_parameters(target, 2)
    d0 = params_digest(target.state_dict())
    byol_ema_update(online, target, 0.99)
    d1 = params_digest(target.state_dict())
    assert d1 != d0
    byol_ema_update(online, target, 0.99)
    assert params_digest(target.state_dict()) != d1

    # equal parameters are the fixed point (up to rounding of m*p + (1-m)*p)
    copy = SSLPredictor()
    initialize_parameters(copy, 1)
    byol_ema_update(online, copy, 0.99)
    for a, b in zip(copy.parameters(), online.parameters()):
        assert torch.allclose(a, b, atol=1e-6)


def test_ema_rejects_bad_momentum():
    online, target = SSLPredictor(), SSLPredictor()
    with pytest.raises(ConfigError):
        byol_ema_update(online, target, -0.1)
    with pytest.raises(ConfigError):
        byol_ema_update(online, target, 1.1)


# ---------------- SimSiam ----------------


def test_simsiam_parallel_gives_minus_one():
    a = torch.tensor([[1.0, 1.0], [0.5, -0.5]], dtype=torch.float64)
    assert abs(loss_simsiam(a, a * 2, a * 3, a * 4).item() + 1.0) < 1e-12


def test_simsiam_stop_gradient_and_prediction_gradient():
    rng = np.random.default_rng(23)
    p1 = torch.tensor(rng.normal(size=(4, 6)), requires_grad=True)
    p2 = torch.tensor(rng.normal(size=(4, 6)), requires_grad=True)
    z1 = torch.tensor(rng.normal(size=(4, 6)), requires_grad=True)
    z2 = torch.tensor(rng.normal(size=(4, 6)), requires_grad=True)
    loss_simsiam(p1, p2, z1, z2).backward()
    assert z1.grad is None or bool((z1.grad == 0).all())
    assert z2.grad is None or bool((z2.grad == 0).all())
    p1d = p1.detach().clone()
    numeric = _central_diff(
        lambda: loss_simsiam(p1d, p2.detach(), z1.detach(), z2.detach()), p1d
    )
    assert _grad_rel_err(p1.grad, numeric) < GRAD_TOL


def test_simsiam_zero_vector_rejected():
    z = torch.ones(2, 4, dtype=torch.float64)
    bad = z.clone()
    bad[0] = 0.0
    with pytest.raises(DegenerateInputError):
        loss_simsiam(z, z, z, bad)


# ---------------- config / loop machinery ----------------


def test_pretrain_config_validation():
    PretrainConfig().validate()
    with pytest.raises(ConfigError):
        PretrainConfig(method="dino").validate()
    with pytest.raises(ConfigError):
        PretrainConfig(temperature=0.0).validate()
    with pytest.raises(ConfigError):
        PretrainConfig(queue_size=4, batch_size=8).validate()
    with pytest.raises(ConfigError):
        PretrainConfig(momentum=1.0).validate()
    with pytest.raises(ConfigError):
        PretrainConfig(momentum=-0.01).validate()


def test_pretrain_config_per_method_defaults():
    assert PretrainConfig(method="enhance").resolved_lr() == 1e-3
    assert PretrainConfig(method="simclr").resolved_lr() == 3e-4
    assert PretrainConfig(method="moco").resolved_momentum() == 0.99
    assert PretrainConfig(method="byol").resolved_momentum() == 0.996
    assert PretrainConfig(method="byol", momentum=0.5).resolved_momentum() == 0.5
    assert PretrainConfig(learning_rate=0.01).resolved_lr() == 0.01


def test_early_stopper_bookkeeping():
    stopper = EarlyStopper(patience=2)
    assert stopper.update(1.0) is True
    assert stopper.update(0.5) is True
    assert stopper.update(0.7) is False
    assert not stopper.should_stop
    assert stopper.update(0.6) is False
    assert stopper.should_stop
    # running minimum is non-increasing
    diffs = np.diff(stopper.best_history)
    assert (diffs <= 0).all()
    assert stopper.best == 0.5


def test_train_logger_jsonl(tmp_path):
    path = tmp_path / "log.jsonl"
    logger = TrainLogger(path)
    logger.log(1, "train", 0.5, 1e-3)
    logger.log(2, "val", 0.4, 1e-3, epoch=0)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == 2
    for key in ("step", "split", "loss", "lr", "wall_ms"):
        assert key in rows[0]
    assert rows[1]["epoch"] == 0
    assert logger.losses("train") == [0.5]
    assert logger.losses("val") == [0.4]


# ---------------- training loops on rendered data ----------------


@pytest.fixture(scope="module")
def tiny_manifest(tmp_path_factory):
    cfg = GenerationConfig(
        n_identities=8,
        impressions_per_identity=2,
        image_size=64,
        split_fractions=(0.5, 0.25, 0.25),
        seed=11,
    )
    return build_dataset(cfg, tmp_path_factory.mktemp("tinyds"))


MODEL64 = UNetConfig(input_size=64)


def test_enhancement_trains_and_exports_checkpoints(tiny_manifest, tmp_path):
    cfg = PretrainConfig(method="enhance", epochs=3, early_stop_patience=3, batch_size=8, seed=3)
    summary = train_enhancement(MODEL64, cfg, tiny_manifest, tmp_path)
    enc, enc_meta = load_checkpoint(summary["encoder_path"], expect_component="encoder")
    dec, _ = load_checkpoint(summary["decoder_path"], expect_component="decoder")
    assert enc_meta.extra["method"] == "enhance"
    assert enc_meta.config_digest == tiny_manifest.config_digest
    encoder = UNetEncoder(MODEL64)
    load_into(encoder, summary["encoder_path"], expect_component="encoder")
    rows = [json.loads(x) for x in open(summary["log_path"])]
    assert any(r["split"] == "val" for r in rows)
    assert summary["best_val_l2"] <= rows[0]["loss"]


def test_enhancement_loss_decreases(tiny_manifest, tmp_path):
    cfg = PretrainConfig(method="enhance", epochs=20, early_stop_patience=20, batch_size=8, seed=3)
    summary = train_enhancement(MODEL64, cfg, tiny_manifest, tmp_path)
    rows = [json.loads(x) for x in open(summary["log_path"])]
    train = [r["loss"] for r in rows if r["split"] == "train"]
    assert train[-1] < train[0] / 2


def test_enhancement_determinism(tiny_manifest, tmp_path):
    cfg = PretrainConfig(method="enhance", epochs=2, early_stop_patience=2, batch_size=8, seed=5)
    s1 = train_enhancement(MODEL64, cfg, tiny_manifest, tmp_path / "a")
    s2 = train_enhancement(MODEL64, cfg, tiny_manifest, tmp_path / "b")
    l1 = [json.loads(x)["loss"] for x in open(s1["log_path"])]
    l2 = [json.loads(x)["loss"] for x in open(s2["log_path"])]
    assert l1 == l2
    d1, _ = load_checkpoint(s1["encoder_path"])
    d2, _ = load_checkpoint(s2["encoder_path"])
    assert params_digest(d1) == params_digest(d2)


def test_enhancement_requires_nonempty_splits(tmp_path):
    cfg = GenerationConfig(
        n_identities=4,
        impressions_per_identity=2,
        image_size=64,
        split_fractions=(1.0, 0.0, 0.0),
        seed=2,
    )
    manifest = build_dataset(cfg, tmp_path / "ds")
    pcfg = PretrainConfig(method="enhance", epochs=1, batch_size=4)
    with pytest.raises(DataError):
        train_enhancement(MODEL64, pcfg, manifest, tmp_path / "out")


@pytest.mark.parametrize("method", ["simclr", "moco", "byol", "simsiam"])
def test_ssl_methods_train_and_export(method, tiny_manifest, tmp_path):
    cfg = PretrainConfig(
        method=method, epochs=2, early_stop_patience=5, batch_size=8, queue_size=16, seed=3
    )
    summary = train_ssl(MODEL64, cfg, tiny_manifest, tmp_path)
    assert summary["epochs_run"] == 2
    assert math.isfinite(summary["final_train_loss"])
    params, meta = load_checkpoint(summary["encoder_path"], expect_component="encoder")
    assert meta.extra["method"] == method
    load_checkpoint(summary["head_path"], expect_component="ssl_head")
    encoder = UNetEncoder(MODEL64)
    load_into(encoder, summary["encoder_path"], expect_component="encoder")


def test_ssl_rejects_enhance_method(tiny_manifest, tmp_path):
    cfg = PretrainConfig(method="enhance", epochs=1, batch_size=8)
    with pytest.raises(ConfigError):
        train_ssl(MODEL64, cfg, tiny_manifest, tmp_path)


def test_encoder_arch_digest_identical_across_methods(tiny_manifest, tmp_path):
    digests = set()
    for method in ("simclr", "byol"):
        cfg = PretrainConfig(
            method=method, epochs=1, early_stop_patience=5, batch_size=8, queue_size=16, seed=3
        )
        summary = train_ssl(MODEL64, cfg, tiny_manifest, tmp_path / method)
        params, _ = load_checkpoint(summary["encoder_path"])
        digests.add(arch_digest(params))
    ecfg = PretrainConfig(method="enhance", epochs=1, early_stop_patience=5, batch_size=8, seed=3)
    summary = train_enhancement(MODEL64, ecfg, tiny_manifest, tmp_path / "enh")
    params, _ = load_checkpoint(summary["encoder_path"])
    digests.add(arch_digest(params))
    assert len(digests) == 1


def test_ssl_determinism(tiny_manifest, tmp_path):
    cfg = PretrainConfig(method="simclr", epochs=2, early_stop_patience=5, batch_size=8, seed=9)
    s1 = train_ssl(MODEL64, cfg, tiny_manifest, tmp_path / "a")
    s2 = train_ssl(MODEL64, cfg, tiny_manifest, tmp_path / "b")
    l1 = [json.loads(x)["loss"] for x in open(s1["log_path"])]
    l2 = [json.loads(x)["loss"] for x in open(s2["log_path"])]
    assert l1 == l2


def test_simsiam_logs_collapse_monitor(tiny_manifest, tmp_path):
    cfg = PretrainConfig(method="simsiam", epochs=1, early_stop_patience=5, batch_size=8, seed=3)
    summary = train_ssl(MODEL64, cfg, tiny_manifest, tmp_path)
    vals = [
        json.loads(x) for x in open(summary["log_path"]) if json.loads(x)["split"] == "val"
    ]
    assert vals and "proj_std_mean" in vals[0] and "proj_std_min" in vals[0]
    assert len(vals[0]["proj_std"]) == 512


def test_simclr_training_loss_decreases(tmp_path):
    """Five epochs on 64 training images must strictly lower NT-Xent from its
    first-epoch average."""
    gen = GenerationConfig(
        n_identities=20,
        impressions_per_identity=4,
        image_size=64,
        split_fractions=(0.8, 0.2, 0.0),
        seed=31,
    )
    manifest = build_dataset(gen, tmp_path / "ds")
    assert len(manifest.for_split("train")) == 64
    cfg = PretrainConfig(method="simclr", epochs=5, early_stop_patience=5, batch_size=16, seed=4)
    summary = train_ssl(MODEL64, cfg, manifest, tmp_path / "out")
    rows = [json.loads(x) for x in open(summary["log_path"])]
    by_epoch = {}
    for r in rows:
        if r["split"] == "train":
            by_epoch.setdefault(r["epoch"], []).append(r["loss"])
    means = [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]
    assert means[-1] < means[0]
