"""Two-phase self-supervised training.

Phase 1 trains with the configured loss; phase 2 continues from the final
phase-1 weights with the learning rate divided by ``lr_decay`` (10) and its
own batch/patch sizes. Every random draw is keyed on
``(master_seed, epoch, step)``, so a run is reproducible and can be resumed
from any per-epoch checkpoint.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
import time
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .bsn import BlindSpotNet, BSNConfig, build_bsn, deterministic_mode, load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig, write_snapshot
from .imagestore import add_noise, load_dataset, load_pairs, sample_patch, to_channels
from .inference import denoise_pd
from .losses import compute_loss

log = logging.getLogger(__name__)


def _phases(config: TrainConfig):
    return [(0, config.phase1), (1, config.phase2)]


def _load_data(config: TrainConfig, images, val):
    cin = config.bsn.in_channels
    if images is None:
        source = config.val_noisy if config.mode == "self_on_test" else config.dataset
        if source is None:
            raise ConfigError("no training data: set dataset (or val_noisy with mode=self_on_test)")
        _, images = load_dataset(source, channels=cin)
    else:
        images = [to_channels(np.asarray(im, dtype=np.float32), cin) for im in images]
    if not images:
        raise ConfigError("training dataset is empty")
    if val is None and config.val_noisy and config.val_clean:
        _, noisy, clean = load_pairs(config.val_noisy, config.val_clean, channels=cin)
        val = (noisy, clean)
    return images, val


def _check_sizes(config: TrainConfig, images):
    largest = max(ph.patch for i, ph in _phases(config) if ph.epochs > 0)
    small = [k for k, im in enumerate(images) if min(im.shape[:2]) < largest]
    if small:
        raise ConfigError(f"images {small[:5]} are smaller than the patch size {largest}")


class _NoisyCache:
    """Noisy versions of the training set for a given epoch."""

    def __init__(self, images, config: TrainConfig):
        self.images = images
        self.noise = config.noise
        self.seed = config.master_seed
        self._epoch = None
        self._noisy = None

    def get(self, epoch: int):
        if self.noise is None:
            return self.images
        key = epoch if self.noise.seed_mode == "per_epoch_random" else 0
        if key != self._epoch:
            self._noisy = [add_noise(im, self.noise, epoch=key, rng_seed=self.seed, image_index=k)
                           for k, im in enumerate(self.images)]
            self._epoch = key
        return self._noisy


def validate(model, val, stride: int):
    noisy, clean = val
    report = metrics.QualityReport()
    for k, (n, c) in enumerate(zip(noisy, clean)):
        report.add(k, denoise_pd(model, n, stride), c)
    return report


def _step_rng(config: TrainConfig, epoch: int, step: int) -> np.random.Generator:
    return np.random.default_rng([config.master_seed, epoch, step])


def _make_optimizer(model, lr):
    return torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8)


def train(config: TrainConfig, images=None, val=None, resume_from=None, on_epoch=None):
    """Run both phases. Returns ``(model, log_records)``.

    ``images`` (list of (H, W, C) arrays) and ``val`` ((noisy, clean) lists)
    override the directories named in the config. When ``config.noise`` is
    set the training images are treated as clean and noise is synthesised.
    ``out_dir`` unset means nothing is written to disk.
    """
    config.validate()
    images, val = _load_data(config, images, val)
    _check_sizes(config, images)

    out = Path(config.out_dir) if config.out_dir else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        write_snapshot(config, out)

    bsn_cfg = dataclasses.replace(config.bsn, seed=config.master_seed)
    model = build_bsn(bsn_cfg)
    opt = _make_optimizer(model, config.phase_lr(0))
    start_epoch = 0
    if resume_from is not None:
        model, record = load_checkpoint(resume_from)
        opt = _make_optimizer(model, config.phase_lr(0))
        opt.load_state_dict(record["optimizer"])
        start_epoch = record["meta"]["epoch"] + 1

    cache = _NoisyCache(images, config)
    records = []
    ctx = deterministic_mode(direct_conv=False) if config.deterministic else contextlib.nullcontext()
    epoch = 0
    with ctx:
        for phase_idx, phase in _phases(config):
            lr = config.phase_lr(phase_idx)
            if phase_idx == 1 and phase.epochs > 0:
                if config.reset_optimizer and start_epoch <= epoch:
                    opt = _make_optimizer(model, lr)
                for group in opt.param_groups:
                    group["lr"] = lr
            for _ in range(phase.epochs):
                if epoch < start_epoch:
                    epoch += 1
                    continue
                rec = _run_epoch(model, opt, config, phase, phase_idx, epoch, cache, val)
                records.append(rec)
                if out is not None:
                    _write_epoch(out, model, opt, config, rec)
                if on_epoch is not None:
                    on_epoch(rec, model)
                epoch += 1
    if out is not None:
        save_checkpoint(out / "final.pt", model, _meta(config, epoch - 1, 1), opt.state_dict())
    model.eval()
    return model, records


def _run_epoch(model, opt, config, phase, phase_idx, epoch, cache, val):
    t0 = time.time()
    model.train()
    noisy = cache.get(epoch)
    remaining = phase.patches_per_epoch
    losses = []
    for step in range(phase.steps_per_epoch):
        rng = _step_rng(config, epoch, step)
        bsz = min(phase.batch, remaining)
        remaining -= bsz
        idx = rng.integers(0, len(noisy), size=bsz)
        patches = np.stack([sample_patch(noisy[i], phase.patch, rng) for i in idx])
        x = torch.from_numpy(np.ascontiguousarray(patches.transpose(0, 3, 1, 2)))
        loss = compute_loss(model, x, config.loss, rng)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        losses.append(loss.item())
    rec = {
        "epoch": epoch,
        "phase": phase_idx + 1,
        "loss": float(np.mean(losses)),
        "first_step_loss": losses[0],
        "lr": opt.param_groups[0]["lr"],
    }
    if val is not None:
        report = validate(model, val, config.eval_stride)
        rec["psnr"] = report.mean_psnr
        rec["ssim"] = report.mean_ssim
    rec["wall_time"] = time.time() - t0
    log.info("epoch %d phase %d loss %.6f%s", epoch, phase_idx + 1, rec["loss"],
             f" psnr {rec['psnr']:.3f}" if "psnr" in rec else "")
    return rec


def _meta(config, epoch, phase_idx):
    return {
        "epoch": epoch,
        "phase": phase_idx + 1,
        "seed": config.master_seed,
        "loss_variant": config.loss.variant,
        "train_config": config.to_dict(),
    }


def _write_epoch(out: Path, model, opt, config, rec):
    with open(out / "train_log.jsonl", "a") as fh:
        fh.write(json.dumps(rec) + "\n")
    save_checkpoint(out / "checkpoints" / f"epoch_{rec['epoch']:03d}.pt", model,
                    _meta(config, rec["epoch"], rec["phase"] - 1), opt.state_dict())


def load_model(path) -> BlindSpotNet:
    model, _ = load_checkpoint(path)
    model.eval()
    return model


__all__ = ["train", "validate", "load_model", "TrainConfig", "BSNConfig"]
