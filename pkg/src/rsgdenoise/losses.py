"""Training losses for the blind-spot network.

Every loss takes ``(model, batch, spec, rng)`` where ``batch`` is an
(N, C, H, W) tensor of noisy patches, and returns a scalar tensor that can be
back-propagated into the model parameters. Reduction is the mean over all
pixels, channels, sub-samples and batch items.

Random draws happen in a fixed order per call: sampling plans first (one per
image, only when ``spec.sampler == "rsg"``), then perturbations. Perturbation
losses always draw their noise, even when ``sigma_eps`` is zero, so the
stream advances identically for every sigma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import sampling
from .bsn import model_dtype, tensor_to_grids

VARIANTS = ("bsn", "apbsn", "pbsn1", "pbsn2", "pbsn3", "sdbsn", "csdbsn")
SAMPLERS = ("pd", "rsg")


@dataclass
class LossSpec:
    variant: str = "csdbsn"
    stride: int = 5
    sigma_eps: float = 0.0
    sampler: str = "rsg"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"loss variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be >= 0")


def _check_batch(batch):
    if not isinstance(batch, torch.Tensor) or batch.ndim != 4:
        raise ValueError("batch must be an (N, C, H, W) tensor")


def subsample_batch(batch: torch.Tensor, spec: LossSpec, rng: np.random.Generator | None) -> torch.Tensor:
    """Split every image into its s*s sub-samples.

    Returns a tensor of shape (s*s, N, C, H/s, W/s). With the RSG sampler each
    image gets its own freshly drawn plan.
    """
    _check_batch(batch)
    if spec.sampler == "rsg" and rng is None:
        raise ValueError("the rsg sampler needs a random generator")
    grids = tensor_to_grids(batch)
    stacks = []
    for img in grids:
        if spec.sampler == "pd":
            st = sampling.pd_split(img, spec.stride)
        else:
            st = sampling.rsg_sample(img, spec.stride, rng)
        stacks.append(st.subs)
    subs = np.stack(stacks, axis=1)  # (s*s, N, h, w, C)
    t = torch.from_numpy(np.ascontiguousarray(subs.transpose(0, 1, 4, 2, 3)))
    return t.to(dtype=batch.dtype, device=batch.device)


def _apply(model, subs: torch.Tensor) -> torch.Tensor:
    k, n = subs.shape[:2]
    flat = subs.reshape(k * n, *subs.shape[2:])
    dtype = model_dtype(model, flat.dtype) if isinstance(model, torch.nn.Module) else flat.dtype
    out = model(flat.to(dtype))
    return out.reshape(k, n, *out.shape[1:])


def _eps(shape, sigma_eps: float, rng: np.random.Generator, like: torch.Tensor) -> torch.Tensor:
    e = rng.normal(0.0, 1.0, size=tuple(shape)) * (sigma_eps / 255.0)
    return torch.from_numpy(np.asarray(e)).to(dtype=like.dtype, device=like.device)


def l_bsn(model, batch: torch.Tensor, spec: LossSpec | None = None, rng=None) -> torch.Tensor:
    """Mean squared error between B(y) and y."""
    _check_batch(batch)
    out = model(batch)
    if out.shape != batch.shape:
        raise ValueError(f"model output {tuple(out.shape)} does not match input {tuple(batch.shape)}")
    return torch.mean((out - batch) ** 2)


def l_apbsn(model, batch, spec: LossSpec, rng=None) -> torch.Tensor:
    subs = subsample_batch(batch, spec, rng)
    return torch.mean(torch.abs(_apply(model, subs) - subs))


def l_pbsn(model, batch, spec: LossSpec, rng: np.random.Generator, variant: int | None = None) -> torch.Tensor:
    """Perturbed variant of l_apbsn.

    1: noise on the network input; 2: noise on the target; 3: independent
    noise on both.
    """
    if variant is None:
        variant = int(spec.variant[-1])
    if variant not in (1, 2, 3):
        raise ValueError(f"perturbation variant must be 1, 2 or 3, got {variant}")
    if rng is None:
        raise ValueError("perturbation losses need a random generator")
    subs = subsample_batch(batch, spec, rng)
    inp, target = subs, subs
    if variant in (1, 3):
        inp = subs + _eps(subs.shape, spec.sigma_eps, rng, subs)
    if variant in (2, 3):
        target = subs + _eps(subs.shape, spec.sigma_eps, rng, subs)
    return torch.mean(torch.abs(_apply(model, inp) - target))


def l_sdbsn(model, batch, spec: LossSpec, rng=None) -> torch.Tensor:
    """B applied to the first sub-sample, compared with the second.

    With stride 1 there is only one sub-sample and it is paired with itself.
    """
    subs = subsample_batch(batch, spec, rng)
    first = subs[:1]
    second = subs[1:2] if subs.shape[0] > 1 else subs[:1]
    return torch.mean(torch.abs(_apply(model, first) - second))


def l_csdbsn(model, batch, spec: LossSpec, rng=None) -> torch.Tensor:
    """Cyclic pairing: B(sub_i) against sub_{i+1}, the last wrapping to the first."""
    subs = subsample_batch(batch, spec, rng)
    target = torch.roll(subs, shifts=-1, dims=0)
    return torch.mean(torch.abs(_apply(model, subs) - target))


def compute_loss(model, batch, spec: LossSpec, rng: np.random.Generator | None = None) -> torch.Tensor:
    v = spec.variant
    if v == "bsn":
        return l_bsn(model, batch, spec, rng)
    if v == "apbsn":
        return l_apbsn(model, batch, spec, rng)
    if v.startswith("pbsn"):
        return l_pbsn(model, batch, spec, rng, int(v[-1]))
    if v == "sdbsn":
        return l_sdbsn(model, batch, spec, rng)
    return l_csdbsn(model, batch, spec, rng)
