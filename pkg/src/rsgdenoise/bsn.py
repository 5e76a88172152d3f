"""Blind-spot network: the output at a pixel never depends on that pixel's input.

Two parallel branches start from a convolution whose centre tap is
structurally zero (3x3 for the dilation-2 branch, 5x5 for dilation-3), then
stack residual blocks of dilated 3x3 convolutions. Every non-zero tap of the
masked kernel has a coordinate that is not a multiple of the dilation, and
the dilated layers only add multiples of it, so no path ever returns to the
centre. Zero padding contributes constants only.
"""

from __future__ import annotations

import contextlib
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


class BlindSpotAuditError(AssertionError):
    pass


class InputTooSmallError(ValueError):
    pass


@dataclass
class BSNConfig:
    in_channels: int = 3
    base_channels: int = 128
    blocks_per_branch: int = 9
    branch_dilations: tuple[int, int] = (2, 3)
    seed: int = 0

    def __post_init__(self):
        self.branch_dilations = tuple(int(d) for d in self.branch_dilations)
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.base_channels < 2:
            raise ValueError("base_channels must be >= 2")
        if self.blocks_per_branch < 1:
            raise ValueError("blocks_per_branch must be >= 1")
        if len(self.branch_dilations) != 2 or min(self.branch_dilations) < 2:
            raise ValueError("branch_dilations must be two integers >= 2")

    @classmethod
    def tiny(cls, in_channels: int = 1, seed: int = 0, blocks_per_branch: int = 2) -> "BSNConfig":
        return cls(in_channels=in_channels, base_channels=32, blocks_per_branch=blocks_per_branch, seed=seed)

    @property
    def receptive_field_radius(self) -> int:
        return max((d - 1) + self.blocks_per_branch * d for d in self.branch_dilations)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branch_dilations"] = list(self.branch_dilations)
        return d


class CentralMaskedConv2d(nn.Conv2d):
    """Convolution whose centre tap is multiplied by a fixed zero mask."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        mask = torch.ones_like(self.weight)
        kh, kw = self.weight.shape[2:]
        mask[:, :, kh // 2, kw // 2] = 0
        self.register_buffer("mask", mask)
        with torch.no_grad():
            self.weight.mul_(mask)

    def forward(self, x):
        return F.conv2d(x, self.weight * self.mask, self.bias, self.stride, self.padding, self.dilation, self.groups)


class DilatedResBlock(nn.Module):
    def __init__(self, ch: int, dilation: int):
        super().__init__()
        self.conv = nn.Conv2d(ch, ch, 3, padding=dilation, dilation=dilation)
        self.mix = nn.Conv2d(ch, ch, 1)

    def forward(self, x):
        return x + self.mix(F.relu(self.conv(x)))


class Branch(nn.Module):
    def __init__(self, ch: int, dilation: int, blocks: int):
        super().__init__()
        k = 2 * dilation - 1
        self.body = nn.Sequential(
            CentralMaskedConv2d(ch, ch, k, padding=k // 2),
            nn.ReLU(),
            nn.Conv2d(ch, ch, 1),
            nn.ReLU(),
            nn.Conv2d(ch, ch, 1),
            nn.ReLU(),
            *[DilatedResBlock(ch, dilation) for _ in range(blocks)],
            nn.Conv2d(ch, ch, 1),
            nn.ReLU(),
        )

    def forward(self, x):
        return self.body(x)


class BlindSpotNet(nn.Module):
    # Below this size the blind spot sees nothing but padding.
    min_input_size = 2

    def __init__(self, config: BSNConfig):
        super().__init__()
        self.config = config
        ch = config.base_channels
        self.head = nn.Conv2d(config.in_channels, ch, 1)
        self.branches = nn.ModuleList(Branch(ch, d, config.blocks_per_branch) for d in config.branch_dilations)
        self.tail = nn.Sequential(
            nn.Conv2d(2 * ch, ch, 1),
            nn.ReLU(),
            nn.Conv2d(ch, ch // 2, 1),
            nn.ReLU(),
            nn.Conv2d(ch // 2, config.in_channels, 1),
        )

    @property
    def receptive_field_radius(self) -> int:
        return self.config.receptive_field_radius

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected input of shape (N, {self.config.in_channels}, H, W), got {tuple(x.shape)}")
        if min(x.shape[2:]) < self.min_input_size:
            raise InputTooSmallError(
                f"input {tuple(x.shape[2:])} is below the minimum spatial size {self.min_input_size}")
        h = F.relu(self.head(x))
        h = torch.cat([b(h) for b in self.branches], dim=1)
        return self.tail(h)

    def masked_convs(self):
        return [m for m in self.modules() if isinstance(m, CentralMaskedConv2d)]


def build_bsn(config: BSNConfig) -> BlindSpotNet:
    """Construct the network; initial weights depend only on ``config.seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = BlindSpotNet(config)
    return model


@contextlib.contextmanager
def deterministic_mode(direct_conv: bool = True):
    """Deterministic kernels; with ``direct_conv`` also bypass oneDNN.

    Direct convolution keeps the summation free of transformed-domain
    rounding, which is what makes the blind-spot audit exact. It is about
    2x slower on CPU, so training only asks for deterministic kernels.
    """
    prev = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        with warnings.catch_warnings():
            # toggling the oneDNN flag warns about TF32 on builds without Intel GPU support
            warnings.simplefilter("ignore", UserWarning)
            flags = torch.backends.mkldnn.flags(enabled=not direct_conv)
            flags.__enter__()
        try:
            yield
        finally:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                flags.__exit__(None, None, None)
    finally:
        torch.use_deterministic_algorithms(prev)


def model_dtype(model, default: torch.dtype = torch.float32) -> torch.dtype:
    for p in model.parameters():
        return p.dtype
    return default


def grids_to_tensor(grids, dtype=torch.float32) -> torch.Tensor:
    """(N, H, W, C) numpy -> (N, C, H, W) tensor."""
    src = torch.from_numpy(np.asarray(grids)).permute(0, 3, 1, 2)
    # a fresh tensor gives canonical strides even for size-1 axes, which keeps
    # the convolution path (and so the rounding) independent of the caller's layout
    out = torch.empty(src.shape, dtype=dtype)
    out.copy_(src)
    return out


def tensor_to_grids(t: torch.Tensor) -> np.ndarray:
    return np.ascontiguousarray(t.detach().cpu().permute(0, 2, 3, 1).numpy())


def forward(model: nn.Module, batch: np.ndarray) -> np.ndarray:
    """Run the network on a stack of (H, W, C) images; returns the same layout."""
    batch = np.asarray(batch)
    dtype = model_dtype(model, torch.float64 if batch.dtype == np.float64 else torch.float32)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(grids_to_tensor(batch, dtype))
    finally:
        model.train(was_training)
    return tensor_to_grids(out).astype(batch.dtype, copy=False)


@dataclass
class AuditReport:
    trials: int
    max_deviation: float
    worst_pixel: tuple[int, int] | None = None
    worst_delta: float | None = None

    @property
    def passed(self) -> bool:
        return self.max_deviation == 0.0

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"blind-spot audit: {verdict} (max deviation {self.max_deviation:g})"


def blind_spot_audit(model: nn.Module, trials: int = 100, rng: np.random.Generator | None = None,
                     size: int = 32, raise_on_failure: bool = True) -> AuditReport:
    """Perturb one pixel per trial and check the output there does not move."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    cin = model.config.in_channels if hasattr(model, "config") else 3
    dtype = model_dtype(model)
    deltas = (0.25, -0.25, 1.0, -1.0)
    worst = AuditReport(trials, 0.0)
    was_training = model.training
    model.eval()
    try:
        with deterministic_mode(), torch.no_grad():
            for _ in range(trials):
                y = torch.from_numpy(rng.random((1, cin, size, size))).to(dtype)
                i, j = (int(v) for v in rng.integers(0, size, 2))
                delta = float(deltas[rng.integers(len(deltas))])
                y2 = y.clone()
                y2[0, :, i, j] += delta
                dev = (model(y)[0, :, i, j] - model(y2)[0, :, i, j]).abs().max().item()
                if dev > worst.max_deviation:
                    worst = AuditReport(trials, dev, (i, j), delta)
    finally:
        model.train(was_training)
    if raise_on_failure and not worst.passed:
        raise BlindSpotAuditError(
            f"output at pixel {worst.worst_pixel} moved by {worst.max_deviation:g} "
            f"when its input was shifted by {worst.worst_delta}")
    return worst


def save_checkpoint(path, model: BlindSpotNet, meta: dict | None = None, optimizer_state=None) -> None:
    record = {
        "config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "meta": dict(meta or {}),
    }
    if optimizer_state is not None:
        record["optimizer"] = optimizer_state
    torch.save(record, path)


def load_checkpoint(path) -> tuple[BlindSpotNet, dict]:
    """Rebuild the model from a self-describing checkpoint; returns ``(model, record)``."""
    record = torch.load(path, map_location="cpu", weights_only=False)
    config = BSNConfig(**record["config"])
    model = BlindSpotNet(config)
    model.load_state_dict(record["state_dict"])
    return model, record
