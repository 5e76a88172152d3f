import json

import numpy as np
import pytest
import torch

from rsgdenoise.config import ConfigError, PhaseConfig, TrainConfig, apply_overrides, load_config, to_dict
from rsgdenoise.imagestore import NoiseSpec
from rsgdenoise.losses import LossSpec
from rsgdenoise.trainer import load_model, train


def _images(n=3, size=24, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.random((size, size, 1)).astype(np.float32) for _ in range(n)]


def _config(tmp_path=None, **kw):
    base = dict(
        phase1=PhaseConfig(lr=1e-3, batch=2, patch=20, epochs=2, patches_per_epoch=4),
        phase2=PhaseConfig(lr=None, batch=2, patch=20, epochs=1, patches_per_epoch=4),
        master_seed=7,
        out_dir=str(tmp_path) if tmp_path else None,
    )
    base.update(kw)
    return TrainConfig.desk(**base)


def _weights(model):
    return {k: v.clone() for k, v in model.state_dict().items()}


def test_smoke_writes_outputs(tmp_path):
    model, records = train(_config(tmp_path), images=_images())
    assert [r["epoch"] for r in records] == [0, 1, 2]
    assert [r["phase"] for r in records] == [1, 1, 2]
    assert all(np.isfinite(r["loss"]) for r in records)
    log = [json.loads(line) for line in open(tmp_path / "train_log.jsonl")]
    assert len(log) == 3
    assert (tmp_path / "final.pt").exists() and (tmp_path / "checkpoints" / "epoch_002.pt").exists()
    snap = json.loads((tmp_path / "resolved_config.json").read_text())
    assert snap["master_seed"] == 7 and snap["loss"]["variant"] == "csdbsn"
    reloaded = load_model(tmp_path / "final.pt")
    for k, v in model.state_dict().items():
        assert torch.equal(reloaded.state_dict()[k], v)


def test_phase_two_learning_rate():
    _, records = train(_config(), images=_images())
    assert records[0]["lr"] == 1e-3
    assert records[2]["lr"] == pytest.approx(1e-4, rel=0, abs=1e-18)
    assert TrainConfig().phase_lr(1) == 1e-5


def test_same_seed_same_weights():
    a, ra = train(_config(), images=_images())
    b, rb = train(_config(), images=_images())
    assert [r["loss"] for r in ra] == [r["loss"] for r in rb]
    for k, v in a.state_dict().items():
        assert torch.equal(b.state_dict()[k], v)
    c, _ = train(_config(master_seed=8), images=_images())
    assert not torch.equal(c.head.weight, a.head.weight)


@pytest.mark.parametrize("resume_epoch", [0, 1])
def test_resume_matches_uninterrupted(tmp_path, resume_epoch):
    full, full_rec = train(_config(tmp_path / "full"), images=_images())
    ckpt = tmp_path / "full" / "checkpoints" / f"epoch_{resume_epoch:03d}.pt"
    resumed, rec = train(_config(tmp_path / "resumed"), images=_images(), resume_from=ckpt)
    assert [r["epoch"] for r in rec] == list(range(resume_epoch + 1, 3))
    assert rec[0]["first_step_loss"] == full_rec[resume_epoch + 1]["first_step_loss"]
    for k, v in full.state_dict().items():
        assert torch.equal(resumed.state_dict()[k], v)


@pytest.mark.parametrize("mode", ["fixed", "per_epoch_random"])
def test_synthetic_noise_modes(mode):
    cfg = _config(noise=NoiseSpec("awgn", 25, mode), loss=LossSpec("bsn"))
    _, rec = train(cfg, images=_images())
    assert all(np.isfinite(r["loss"]) for r in rec)


def test_validation_metrics_recorded():
    imgs = _images()
    _, rec = train(_config(), images=imgs, val=(imgs[:1], imgs[:1]))
    assert "psnr" in rec[0] and "ssim" in rec[0]


def test_self_on_test_reads_noisy_dir(tmp_path):
    from rsgdenoise.imagestore import save_image

    (tmp_path / "noisy").mkdir()
    for k, im in enumerate(_images()):
        save_image(im, tmp_path / "noisy" / f"{k}.png")
    _, rec = train(_config(mode="self_on_test", val_noisy=str(tmp_path / "noisy")))
    assert len(rec) == 3


def test_patch_larger_than_images():
    with pytest.raises(ConfigError, match="smaller than the patch size"):
        train(_config(), images=_images(size=16))


def test_config_validation():
    with pytest.raises(ConfigError, match="divisible"):
        _config(phase1=PhaseConfig(patch=42))
    with pytest.raises(ConfigError):
        _config(mode="other")
    with pytest.raises(ConfigError):
        train(_config())


def test_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"phase1": {"epochs": 3}, "master_seed": 5}))
    cfg = load_config(path, ["master_seed=9", "loss.sigma_eps=5", "phase1.lr=0.01"])
    assert cfg.master_seed == 9 and cfg.phase1.epochs == 3
    assert cfg.loss.sigma_eps == 5 and cfg.phase1.lr == 0.01
    assert cfg.phase1.batch == 16


def test_config_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key: phase1.epochz"):
        load_config(None, ["phase1.epochz=3"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_config_roundtrip():
    cfg = _config(noise=NoiseSpec("correlated", 15))
    again = load_config(None, [], base=to_dict(cfg))
    assert again == cfg
