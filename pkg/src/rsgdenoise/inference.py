"""Test-time pipelines: PD stitching, the second full-resolution pass, n-RSG averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sampling
from .bsn import forward
from .imagestore import as_image
from .sampling import make_rsg_plan

PIPELINES = ("pd", "pd_enhance", "nrsg", "nrsg_enhance")


@dataclass
class InferenceSpec:
    pipeline: str = "pd"
    stride_test: int = 2
    n: int = 1

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.stride_test < 1 or self.n < 1:
            raise ValueError("stride_test and n must be >= 1")


def _check_channels(model, img):
    cin = getattr(getattr(model, "config", None), "in_channels", None)
    if cin is not None and img.shape[2] != cin:
        raise ValueError(f"model expects {cin} channels, image has {img.shape[2]}")


def _denoise_stack(model, stack: sampling.SubsampleStack) -> sampling.SubsampleStack:
    return stack.with_subs(forward(model, stack.subs))


def denoise_pd(model, img, stride: int = 2) -> np.ndarray:
    """Pad, split with PD, denoise every sub-image, stitch, crop, clip."""
    img = as_image(img)
    _check_channels(model, img)
    padded, crop = sampling.pad_to_multiple(img, stride)
    out = sampling.pd_merge(_denoise_stack(model, sampling.pd_split(padded, stride)))
    return np.clip(crop.apply(out), 0.0, 1.0)


def _full_pass(model, img) -> np.ndarray:
    return np.clip(forward(model, img[None])[0], 0.0, 1.0)


def denoise_enhance(model, img, stride: int = 2, enhance: bool = True) -> np.ndarray:
    """PD result followed by one more pass of the same network at full resolution."""
    first = denoise_pd(model, img, stride)
    return _full_pass(model, first) if enhance else first


def rsg_passes(model, img, stride: int, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """n independent single-RSG denoising results, each with a fresh plan."""
    img = as_image(img)
    _check_channels(model, img)
    padded, crop = sampling.pad_to_multiple(img, stride)
    grid = (padded.shape[0] // stride, padded.shape[1] // stride)
    outs = []
    for _ in range(n):
        stack = sampling.rsg_split(padded, make_rsg_plan(stride, grid, rng))
        merged = sampling.rsg_merge(_denoise_stack(model, stack))
        outs.append(np.clip(crop.apply(merged), 0.0, 1.0))
    return outs


def average(passes) -> np.ndarray:
    acc = np.zeros(passes[0].shape, dtype=np.float64)
    for p in passes:
        acc += p
    acc /= len(passes)
    return acc.astype(np.float32)


def denoise_nrsg(model, img, stride: int = 2, n: int = 1, rng: np.random.Generator | None = None,
                 enhance: bool = False) -> np.ndarray:
    """Average n single-RSG results; optionally run the full-resolution pass on the average."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    mean = average(rsg_passes(model, img, stride, n, rng))
    return _full_pass(model, mean) if enhance else mean


def denoise(model, img, spec: InferenceSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    if spec.pipeline == "pd":
        return denoise_pd(model, img, spec.stride_test)
    if spec.pipeline == "pd_enhance":
        return denoise_enhance(model, img, spec.stride_test)
    return denoise_nrsg(model, img, spec.stride_test, spec.n, rng, enhance=spec.pipeline == "nrsg_enhance")
